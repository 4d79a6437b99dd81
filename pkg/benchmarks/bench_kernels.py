"""Timing comparison of the pairwise-loss backends.

Runs loss_value_grad over growing cross-section sizes against both the
compiled extension and the numpy fallback, printing a table of per-call
times and the speedup.  Usage:

    python3 benchmarks/bench_kernels.py [--sizes 200,500,1000,2000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from xsrank import _pairloss_np

try:
    from xsrank import _pairloss_cy
except ImportError:
    _pairloss_cy = None


def time_call(fn, scores, returns, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(scores, returns)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="200,500,1000,2000")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    if _pairloss_cy is None:
        print("compiled backend unavailable; timing numpy fallback only")
    header = f"{'n':>6} {'numpy (ms)':>12}"
    if _pairloss_cy is not None:
        header += f" {'cython (ms)':>12} {'speedup':>8} {'max rel err':>12}"
    print(header)
    for n in sizes:
        scores = np.ascontiguousarray(rng.normal(size=n))
        returns = np.ascontiguousarray(rng.normal(0, 0.02, size=n))
        t_np = time_call(_pairloss_np.loss_value_grad, scores, returns,
                         args.repeat)
        line = f"{n:>6} {t_np * 1e3:>12.3f}"
        if _pairloss_cy is not None:
            t_cy = time_call(_pairloss_cy.loss_value_grad, scores, returns,
                             args.repeat)
            v_np, g_np = _pairloss_np.loss_value_grad(scores, returns)
            v_cy, g_cy = _pairloss_cy.loss_value_grad(scores, returns)
            rel = abs(v_np - v_cy) / max(1e-300, abs(v_np))
            gdiff = np.max(np.abs(np.asarray(g_np) - np.asarray(g_cy)))
            gref = max(1e-300, float(np.max(np.abs(g_np))))
            rel = max(rel, gdiff / gref)
            line += f" {t_cy * 1e3:>12.3f} {t_np / t_cy:>8.2f} {rel:>12.2e}"
        print(line)


if __name__ == "__main__":
    main()
