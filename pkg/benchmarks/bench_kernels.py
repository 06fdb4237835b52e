"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and shape with the best-of-N time of each
backend and the speedup. Exits non-zero if the extension is not built.
"""

import argparse
import sys
import timeit

import numpy as np

from sassl.numcore.kernels import _reference as ref

try:
    from sassl.numcore.kernels import _ckernels as cy
except ImportError:
    sys.exit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")

CASES = [
    # (batch, channels, size, kernel, stride, pad)
    (128, 3, 32, 3, 2, 1),
    (128, 32, 16, 3, 2, 1),
    (64, 16, 32, 3, 1, 1),
    (8, 64, 8, 3, 1, 1),
]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<8} {'shape':<28} {'numpy ms':>9} {'cython ms':>10} {'speedup':>8}")
    for n, c, s, k, st, p in CASES:
        x = rng.standard_normal((n, c, s, s)).astype(np.float32)
        cols = ref.im2col(x, k, k, st, p)
        shape = f"{n}x{c}x{s}x{s} k{k} s{st}"
        for name, f_ref, f_cy in (
            ("im2col", lambda: ref.im2col(x, k, k, st, p), lambda: cy.im2col(x, k, k, st, p)),
            ("col2im", lambda: ref.col2im(cols, x.shape, k, k, st, p), lambda: cy.col2im(cols, x.shape, k, k, st, p)),
        ):
            t_ref, t_cy = best(f_ref, args.repeat), best(f_cy, args.repeat)
            print(f"{name:<8} {shape:<28} {t_ref * 1e3:9.2f} {t_cy * 1e3:10.2f} {t_ref / t_cy:7.2f}x")
    img = rng.uniform(size=(3, 64, 64)).astype(np.float32)
    t_ref = best(lambda: ref.hue_shift(img, 0.1), args.repeat * 20)
    t_cy = best(lambda: cy.hue_shift(img, 0.1), args.repeat * 20)
    print(f"{'hue':<8} {'3x64x64':<28} {t_ref * 1e3:9.2f} {t_cy * 1e3:10.2f} {t_ref / t_cy:7.2f}x")


if __name__ == "__main__":
    main()
