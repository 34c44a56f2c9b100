"""Time the numba and pure-numpy kernel backends on layer-sized workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call of each shape includes JIT compilation, so every case
is warmed up once before timing.  Results are best-of-``repeat`` wall time.
"""

import argparse
import time

import numpy as np

from detnet import ops, use_backend
from detnet._accel import HAS_NUMBA
from detnet.tensor import Tensor

# (label, N, C_in, H, W, C_out, k, stride, padding, dilation)
CONV_CASES = [
    ("stem 7x7/2", 2, 3, 64, 64, 16, 7, 2, 3, 1),
    ("3x3", 4, 32, 28, 28, 32, 3, 1, 1, 1),
    ("3x3 dil2", 4, 32, 28, 28, 32, 3, 1, 2, 2),
    ("1x1", 4, 64, 28, 28, 256, 1, 1, 0, 1),
    ("3x3/2", 4, 64, 28, 28, 64, 3, 2, 1, 1),
]


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def conv_fns(case, rng):
    _, n, c_in, h, w, c_out, k, s, p, d = case
    x = rng.standard_normal((n, c_in, h, w)).astype(np.float32)
    wt = (rng.standard_normal((c_out, c_in, k, k)) * 0.1).astype(np.float32)

    def fwd():
        return ops.conv2d(Tensor(x), ops.ConvParams(Tensor(wt), None, s, p, d))

    def fwd_bwd():
        xt, wp = Tensor(x, requires_grad=True), Tensor(wt, requires_grad=True)
        ops.tensor_sum(ops.conv2d(xt, ops.ConvParams(wp, None, s, p, d))).backward()

    return fwd, fwd_bwd


def pool_fn(rng):
    x = rng.standard_normal((4, 64, 56, 56)).astype(np.float32)

    def fwd_bwd():
        xt = Tensor(x, requires_grad=True)
        ops.tensor_sum(ops.max_pool(xt, 3, 2, 1)).backward()

    return fwd_bwd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]
    rng = np.random.default_rng(0)

    rows = []
    for case in CONV_CASES:
        fwd, fwd_bwd = conv_fns(case, rng)
        for what, fn in (("fwd", fwd), ("fwd+bwd", fwd_bwd)):
            rows.append((f"conv {case[0]} {what}", {b: _timed(b, fn, args.repeat) for b in backends}))
    rows.append(("maxpool 3x3/2 fwd+bwd", {b: _timed(b, pool_fn(rng), args.repeat) for b in backends}))

    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for label, t in rows:
        line = f"{label:<28}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"   {t['numpy'] / t['numba']:>6.2f}x"
        print(line)


def _timed(backend, fn, repeat):
    with use_backend(backend):
        return best_of(fn, repeat)


if __name__ == "__main__":
    main()
