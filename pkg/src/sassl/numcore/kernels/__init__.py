"""Hot-loop kernels: the compiled extension when built, numpy otherwise.

Set ``SASSL_KERNELS=python`` to force the numpy fallback.
"""

import os

from . import _reference

BACKEND = "python"

if os.environ.get("SASSL_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _reference
else:
    _impl = _reference

im2col = _impl.im2col
col2im = _impl.col2im
hue_shift = _impl.hue_shift
conv_out_size = _reference.conv_out_size

__all__ = ["BACKEND", "im2col", "col2im", "hue_shift", "conv_out_size"]
