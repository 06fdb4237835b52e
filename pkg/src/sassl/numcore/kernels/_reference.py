"""Pure-numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable, and
the reference the compiled versions are tested against.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """Unfold an NCHW array into a (N*Ho*Wo, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols, shape, kh, kw, stride, pad):
    """Scatter-add a patch matrix back into an NCHW array (adjoint of im2col)."""
    n, c, h, w = shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    cols = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        i_end = i + stride * ho
        for j in range(kw):
            j_end = j + stride * wo
            out[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def hue_shift(img, delta):
    """Rotate the hue of a CHW RGB image by ``delta`` turns of the hue circle."""
    r, g, b = img[0], img[1], img[2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    v = maxc
    span = maxc - minc
    safe_max = np.where(maxc > 0, maxc, 1)
    s = np.where(maxc > 0, span / safe_max, 0)
    safe_span = np.where(span > 0, span, 1)
    rc = (maxc - r) / safe_span
    gc = (maxc - g) / safe_span
    bc = (maxc - b) / safe_span
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    h = (h + delta) % 1.0

    h6 = h * 6.0
    i = np.floor(h6)
    f = h6 - i
    i = i.astype(np.int64) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    out = np.empty_like(img)
    out[0] = np.choose(i, [v, q, p, p, t, v])
    out[1] = np.choose(i, [t, v, v, q, p, p])
    out[2] = np.choose(i, [p, p, t, v, v, q])
    return out
