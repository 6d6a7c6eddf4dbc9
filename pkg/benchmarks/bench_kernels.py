"""Time the numba kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--quick]

Prints one line per kernel and shape with the best-of-N wall time for each
backend, the speedup, and the max relative disagreement between the two.
"""

import argparse
import time

import numpy as np

from sgnet import _runtime, kernels


def best_of(fn, repeats):
    fn()  # warm-up, includes JIT compilation on the first call
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def rel_diff(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def conv_cases(quick):
    # (batch, c_in, c_out, spatial) for a 3x3x3 kernel on padded input
    shapes = [(2, 2, 16, 24), (2, 16, 16, 24), (2, 32, 32, 12)]
    if not quick:
        shapes += [(2, 16, 32, 48), (1, 64, 64, 12)]
    rng = np.random.default_rng(0)
    for n, ci, co, s in shapes:
        xp = rng.standard_normal((n, ci, s + 2, s + 2, s + 2))
        w = rng.standard_normal((co, ci, 3, 3, 3))
        g = rng.standard_normal((n, co, s, s, s))
        label = f"n={n} ci={ci} co={co} {s}^3"
        yield "conv3d_forward", label, lambda xp=xp, w=w: kernels.conv3d_forward(xp, w, 1)
        yield "conv3d_grad_input", label, lambda g=g, w=w, xp=xp: kernels.conv3d_grad_input(g, w, xp.shape, 1)
        yield "conv3d_grad_weight", label, lambda xp=xp, g=g: kernels.conv3d_grad_weight(xp, g, 1, 3)


def edt_cases(quick):
    rng = np.random.default_rng(1)
    for s in ([32, 64] if quick else [32, 64, 96]):
        src = rng.random((s, s, s)) < 0.001
        src[0, 0, 0] = True
        yield "squared_edt", f"{s}^3", lambda src=src: kernels.squared_edt(src, (1.0, 1.0, 2.0))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    if not _runtime.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    _runtime.configure_threads()
    print(f"threads={_runtime.num_threads()}")
    print(f"{'kernel':<20} {'shape':<26} {'numba_s':>9} {'numpy_s':>9} {'speedup':>8} {'rel_diff':>9}")
    for name, label, fn in list(conv_cases(args.quick)) + list(edt_cases(args.quick)):
        with _runtime.use_backend("numba"):
            t_nb, a = best_of(fn, args.repeats)
        with _runtime.use_backend("numpy"):
            t_np, b = best_of(fn, args.repeats)
        print(f"{name:<20} {label:<26} {t_nb:9.4f} {t_np:9.4f} {t_np / t_nb:8.2f} {rel_diff(a, b):9.1e}")


if __name__ == "__main__":
    main()
