"""Timing comparison of the compiled and pure-numpy kernel backends.

Runs the conv / maxpool forward and backward kernels on shapes taken
from the inter-point chain at N = 2048 (plus one generic image-like
case), reports best-of-``--repeats`` wall time for each backend, and the
maximum absolute deviation between their outputs.  Max pooling (a pure
selection) must agree bitwise; the conv kernels sum in different orders
(BLAS reductions vs explicit loops), so expect deviations at the
rounding level, around 1e-13, and nothing larger.

Usage: python benchmarks/bench_kernels.py [--repeats 7] [--inner 20]
"""

import argparse
import time

import numpy as np

from ipcnet.backend import reference

try:
    from ipcnet.backend import _native
except ImportError:
    _native = None


def _time(fn, repeats, inner):
    best = float("inf")
    for _ in range(repeats):
        tick = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - tick) / inner)
    return best


def _deviation(a, b):
    if isinstance(a, tuple):
        return max(_deviation(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=np.float64)
                        - np.asarray(b, dtype=np.float64)).max())


def conv_case(name, x_shape, w_shape, strides, gen):
    x = gen.normal(size=x_shape)
    w = gen.normal(size=w_shape)
    b = gen.normal(size=w_shape[3])
    sh, sw = strides
    fwd = lambda impl: impl.conv2d_forward(x, w, b, sh, sw)
    grad = np.ascontiguousarray(gen.normal(size=fwd(reference).shape))
    bwd = lambda impl: impl.conv2d_backward(x, w, grad, sh, sw)
    return [(f"{name} fwd", fwd), (f"{name} bwd", bwd)]


def pool_case(name, x_shape, pool, strides, gen):
    x = gen.normal(size=x_shape)
    ph, pw = pool
    sh, sw = strides
    fwd = lambda impl: impl.maxpool_forward(x, ph, pw, sh, sw)
    _, arg = fwd(reference)
    grad = np.ascontiguousarray(gen.normal(size=arg.shape))
    bwd = lambda impl: impl.maxpool_backward(grad, arg, x_shape[0], x_shape[1])
    return [(f"{name} fwd", fwd), (f"{name} bwd", bwd)]


def build_cases():
    gen = np.random.default_rng(0)
    cases = []
    # the inter-point chain at N = 2048
    cases += conv_case("ipc feature conv (2048,64,1)k(1,64)->64", (2048, 64, 1),
                       (1, 64, 1, 64), (1, 1), gen)
    cases += pool_case("ipc pool (2048,1,64) 10x1/10", (2048, 1, 64),
                       (10, 1), (10, 1), gen)
    cases += conv_case("ipc down1 (204,1,64)k(6,1)/5->32", (204, 1, 64),
                       (6, 1, 64, 32), (5, 1), gen)
    cases += conv_case("ipc down2 (40,1,32)k(4,1)/3->16", (40, 1, 32),
                       (4, 1, 32, 16), (3, 1), gen)
    # a generic 2-D case for balance
    cases += conv_case("image conv (64,64,3)k(5,5)->8", (64, 64, 3),
                       (5, 5, 3, 8), (1, 1), gen)
    cases += pool_case("image pool (128,128,8) 2x2/2", (128, 128, 8),
                       (2, 2), (2, 2), gen)
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--inner", type=int, default=20)
    args = parser.parse_args()

    if _native is None:
        print("compiled extension not importable; timing the python backend only")
    header = f"{'case':45s} {'python':>10s} {'native':>10s} {'ratio':>7s} {'max|dev|':>10s}"
    print(header)
    print("-" * len(header))
    for name, fn in build_cases():
        t_py = _time(lambda: fn(reference), args.repeats, args.inner)
        if _native is None:
            print(f"{name:45s} {t_py * 1e3:9.3f}ms {'-':>10s} {'-':>7s} {'-':>10s}")
            continue
        t_nat = _time(lambda: fn(_native), args.repeats, args.inner)
        dev = _deviation(fn(reference), fn(_native))
        print(f"{name:45s} {t_py * 1e3:9.3f}ms {t_nat * 1e3:9.3f}ms "
              f"{t_py / t_nat:6.1f}x {dev:10.3e}")


if __name__ == "__main__":
    main()
