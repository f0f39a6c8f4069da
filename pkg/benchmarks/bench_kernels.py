"""Compare the compiled and numpy HJBI step kernels.

Runs a fixed number of backward steps for each corpus example on both
backends, reports the largest difference between the resulting slices (zero unless
the power term meets a last-bit difference between libm and numpy), and prints
wall-clock times per step.

    python benchmarks/bench_kernels.py --steps 200
"""

import argparse
import time

import numpy as np

from sdgame import build_example, cfl_grid, solve
from sdgame.corpus import DEFAULT_GRIDS
from sdgame.kernels import compiled_available


def run(example: str, steps: int, backend: str, threads: int):
    spec = build_example(example)
    x_lo, x_hi, n_x = DEFAULT_GRIDS[example]
    full = cfl_grid(spec, x_lo, x_hi, n_x)
    # same dt as the CFL grid, truncated horizon
    T = full.dt * steps
    spec = spec.replace(T=T)
    grid = full.__class__(x_lo, x_hi, n_x, steps, T)
    t0 = time.perf_counter()
    vf = solve(spec, grid, backend=backend, threads=threads, save_every=steps)
    return vf.values[0], time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled kernel not built; reinstall with Cython available")
    print(f"{'example':8s} {'numpy ms/step':>14s} {'compiled ms/step':>17s} {'speedup':>8s}  max diff")
    for ex in ("ex51", "ex52", "ex53"):
        w_np, t_np = run(ex, args.steps, "numpy", 1)
        w_c, t_c = run(ex, args.steps, "compiled", args.threads)
        diff = float(np.max(np.abs(w_np - w_c)))
        print(f"{ex:8s} {1e3 * t_np / args.steps:14.3f} {1e3 * t_c / args.steps:17.3f} "
              f"{t_np / t_c:8.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
