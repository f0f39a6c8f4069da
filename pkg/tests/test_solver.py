import math

import numpy as np
import pytest

from sdgame import (CFLError, ControlSet, DomainError, GridSpec, NumericalAbort, ProblemSpec,
                    build_example, cfl_check, cfl_grid, solve)
from sdgame.corpus import analytic_for
from sdgame.kernels import compiled_available
from sdgame.solver import Z_REGIME_FLAG, convergence_study, interior_error


def tiny(generator=0.0, terminal=1.0, **kw):
    base = dict(drift={"mul": ["u", "x"]}, diffusion="v", generator=generator, terminal=terminal,
                T=1.0, U=ControlSet.box((-1.0, 1.0), points=3),
                V=ControlSet.box((0.5, 1.0), points=3))
    base.update(kw)
    return ProblemSpec(**base)


def test_constant_terminal_gives_constant_field():
    spec = tiny(terminal=2.5)
    vf = solve(spec, cfl_grid(spec, -1.0, 1.0, 41))
    assert np.all(vf.values == 2.5)


def test_terminal_slice_is_exact(ex51):
    grid = cfl_grid(ex51, -1.0, 1.0, 41)
    vf = solve(ex51, grid)
    assert np.array_equal(vf.values[-1], ex51.h(grid.x))
    assert vf.times[0] == 0.0 and vf.times[-1] == ex51.T


def test_cfl_unconstrained_without_dynamics():
    spec = tiny(drift=0.0, diffusion=0.0)
    rep = cfl_check(spec, GridSpec(-1, 1, 11, 1, 1.0))
    assert rep.unconstrained and rep.to_dict()["max_stable_dt"] == "unconstrained"
    vf = solve(spec, GridSpec(-1, 1, 11, 1, 1.0))
    assert np.all(vf.values == 1.0)


def test_cfl_bound_and_violation(ex51):
    grid = GridSpec(-2.0, 2.0, 401, 100, 1.0)
    rep = cfl_check(ex51, grid)
    assert rep.max_stable_dt <= grid.dx ** 2
    with pytest.raises(CFLError, match="CFL"):
        solve(ex51, grid)
    assert cfl_grid(ex51, -2.0, 2.0, 401).dt <= 0.9 * rep.max_stable_dt * (1 + 1e-12)


def test_non_finite_terminal_aborts_with_location():
    spec = tiny(terminal={"pow": ["x", -1]})
    with pytest.raises(NumericalAbort) as info:
        with np.errstate(divide="ignore"):
            solve(spec, cfl_grid(spec, -1.0, 1.0, 21))
    assert info.value.point["x"] == 0.0


def test_blow_up_aborts_with_location():
    # y^2 is not monotone; starting from large data the march diverges
    spec = tiny(generator={"pow": ["y", 2]}, terminal=1e3, theta=1e3, eta=1.0, p=1.0)
    grid = cfl_grid(spec, -1.0, 1.0, 21).with_steps(5)
    with pytest.raises(NumericalAbort) as info:
        with np.errstate(all="ignore"):
            solve(spec, grid, check_cfl=False)
    assert "t" in info.value.point and "x" in info.value.point


def test_admissible_band_violation_raises_domain_error():
    spec = build_example("ex53").replace(terminal=-1e-7)
    with pytest.raises(DomainError):
        solve(spec, cfl_grid(spec, 0.0, 8.0, 41))


def test_discrete_comparison(ex51):
    low = ex51.replace(terminal={"add": [{"mul": [0.5, {"pow": ["x", 2]}]}, -0.1]})
    high = ex51.with_generator({"add": [ex51.generator.to_config(), 0.2]})
    grid = cfl_grid(ex51, -1.0, 1.0, 81)
    w = solve(ex51, grid).values
    assert np.all(solve(low, grid).values <= w)
    assert np.all(solve(high, grid).values >= w)


@pytest.mark.parametrize("example", ["ex51", "ex52"])
def test_lower_below_upper(example):
    spec = build_example(example)
    grid = cfl_grid(spec, -1.0, 1.0, 81)
    lo = solve(spec, grid, "lower").values
    hi = solve(spec, grid, "upper").values
    assert np.all(lo <= hi + 10 * grid.dx)


def test_growth_constant_is_stable_under_refinement():
    spec = build_example("ex53")
    k = [solve(spec, cfl_grid(spec, 0.0, 8.0, n)).growth_constant for n in (81, 161)]
    assert np.isfinite(k).all()
    assert max(k) / min(k) < 1.05


@pytest.mark.skipif(not compiled_available(), reason="compiled kernel not built")
@pytest.mark.parametrize("example,window", [("ex51", (-2, 2)), ("ex52", (-2, 2)),
                                            ("ex53", (0, 8))])
def test_backends_agree(example, window):
    spec = build_example(example)
    grid = cfl_grid(spec, *window, 81)
    grid = grid.with_steps(grid.N_t)
    a = solve(spec, grid, backend="compiled")
    b = solve(spec, grid, backend="numpy")
    assert a.info["backend"] == "compiled" and b.info["backend"] == "numpy"
    if spec.generator.structure().phi is None:
        assert np.array_equal(a.values, b.values)
    else:
        # libm pow and numpy's vectorized power may differ in the last bit
        assert np.allclose(a.values, b.values, rtol=1e-14, atol=0.0)
    c = solve(spec, grid, backend="compiled", threads=2)
    assert np.array_equal(a.values, c.values)


@pytest.mark.parametrize("example,window", [("ex51", (-1, 1)), ("ex52", (-1, 1)),
                                            ("ex53", (0, 8))])
def test_generic_path_matches_structured_path(example, window):
    spec = build_example(example)
    g = spec.generator.to_config()
    # max(g, g - 1 - |y|) equals g but has no structured form
    generic = spec.with_generator({"max": [g, {"sub": [g, {"add": [1.0, {"abs": "y"}]}]}]})
    assert generic.generator.structure() is None
    grid = cfl_grid(spec, *window, 41)
    a = solve(spec, grid)
    b = solve(generic, grid)
    assert b.info["backend"] == "numpy-generic"
    assert np.allclose(a.values, b.values, rtol=1e-12, atol=1e-12)


def test_z_dependent_solve_is_flagged(ex52):
    vf = solve(ex52, cfl_grid(ex52, -1.0, 1.0, 21))
    assert vf.info["z_dependent"] and vf.info["regime"] == Z_REGIME_FLAG


def test_convergence_study_exact_branch(ex51):
    grids = [cfl_grid(ex51, -1.0, 1.0, n) for n in (21, 41, 81)]
    rep = convergence_study(ex51, grids, analytic=analytic_for(ex51))
    assert rep.exact and rep.observed_order == math.inf
    assert rep.to_dict()["observed_order"] == "exact"


def test_convergence_study_ex52(ex52):
    grids = [cfl_grid(ex52, -2.0, 2.0, n) for n in (51, 101, 201)]
    rep = convergence_study(ex52, grids, analytic=analytic_for(ex52))
    assert rep.monotone and rep.observed_order >= 0.5


def test_convergence_study_needs_three_grids(ex51):
    with pytest.raises(ValueError):
        convergence_study(ex51, [cfl_grid(ex51, -1, 1, 21)] * 2)


def test_analytic_solutions_are_discrete_fixed_points():
    # one scheme step from the exact slice reproduces the exact slice to O(dx)
    for example in ("ex51", "ex52"):
        spec = build_example(example)
        grid = cfl_grid(spec, -2.0, 2.0, 201)
        dt = grid.dt
        one = GridSpec(-2.0, 2.0, 201, 1, dt)
        exact = analytic_for(spec)
        shifted = spec.replace(T=dt, terminal=spec.terminal)
        vf = solve(shifted, one)
        x = grid.x
        away = (np.abs(x) >= 0.1) & grid.interior_mask(0.3)
        ref_next = exact(spec.T, x)
        ref_now = exact(spec.T - dt, x)
        res = (vf.values[0] - ref_now) / dt
        assert np.array_equal(vf.values[-1], ref_next)
        assert np.max(np.abs(res[away])) <= 10 * grid.dx, example


def test_interior_error_of_fixture(ex51_field):
    spec, vf = ex51_field
    assert interior_error(vf, analytic_for(spec)) == 0.0
