"""Cached solves shared by the fixtures and the acceptance script."""

import time
from functools import lru_cache

from sdgame import build_example, cfl_grid, solve

SLICES = 200


@lru_cache(maxsize=None)
def solved(example, x_lo, x_hi, n_x):
    """Return ``(spec, field, seconds)`` for a CFL-grid solve keeping about 200 slices."""
    spec = build_example(example)
    grid = cfl_grid(spec, x_lo, x_hi, n_x)
    start = time.perf_counter()
    vf = solve(spec, grid, save_every=max(1, grid.N_t // SLICES))
    return spec, vf, time.perf_counter() - start
