"""Benchmark the backward-sweep backends (numba kernel vs pure numpy).

The backend is selected per run through the STOPGAME_BACKEND environment
variable, which the kernel dispatcher reads on every call, so both can be
timed inside one process.  Also reports the sup-norm disagreement between
the two results as a sanity check.

Usage: python3 benchmarks/bench_solver.py [--builtin NAME] [--substeps S]
       [--n-outer N [N ...]] [--repeat R]
"""

import argparse
import os
import time

import numpy as np

from stopgame import kernels
from stopgame.demos import builtin_model
from stopgame.solver import solve_zachrisson


def run(model, n_outer, substeps, backend, repeat):
    os.environ["STOPGAME_BACKEND"] = backend
    grid = solve_zachrisson(model, n_outer, substeps)  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        grid = solve_zachrisson(model, n_outer, substeps)
        best = min(best, time.perf_counter() - start)
    return best, grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--builtin", default="two_state_game")
    ap.add_argument("--substeps", type=int, default=8)
    ap.add_argument("--n-outer", type=int, nargs="+",
                    default=[100, 400, 1600], dest="n_outer")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    model = builtin_model(args.builtin)
    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    print(f"model={args.builtin}  substeps={args.substeps}  "
          f"repeat={args.repeat} (best shown)")
    print(f"{'n_outer':>8} " + "".join(f"{b:>12}" for b in backends)
          + f"{'speedup':>10}{'max diff':>12}")
    prev_env = os.environ.get("STOPGAME_BACKEND")
    try:
        for n in args.n_outer:
            times = {}
            grids = {}
            for b in backends:
                times[b], grids[b] = run(model, n, args.substeps, b,
                                         args.repeat)
            row = f"{n:>8} " + "".join(f"{times[b] * 1e3:>10.2f}ms"
                                       for b in backends)
            if len(backends) == 2:
                diff = float(np.max(np.abs(grids["numpy"].values
                                           - grids["numba"].values)))
                row += f"{times['numpy'] / times['numba']:>9.1f}x"
                row += f"{diff:>12.2e}"
            print(row)
    finally:
        if prev_env is None:
            os.environ.pop("STOPGAME_BACKEND", None)
        else:
            os.environ["STOPGAME_BACKEND"] = prev_env


if __name__ == "__main__":
    main()
