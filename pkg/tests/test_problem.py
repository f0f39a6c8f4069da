import json

import numpy as np
import pytest

from sdgame import ConfigError, ControlSet, GridSpec, ProblemSpec, ValidationError, build_example
from sdgame.coefficients import parse_expr
from sdgame.config import dump_config, load_config, problem_from_config, problem_to_config
from sdgame.corpus import EXAMPLES
from sdgame.problem import validate_problem


def simple(generator, **kw):
    base = dict(drift="u", diffusion=1.0, generator=generator, terminal="x", T=1.0,
                U=ControlSet.box((0.0, 1.0), points=3), V=ControlSet.box((-1.0, 0.0), points=3))
    base.update(kw)
    return ProblemSpec(**base)


def sample_points(spec, n, rng):
    lo, hi = spec.sample_box
    u = spec.U.points[rng.integers(0, spec.U.size, n)]
    v = spec.V.points[rng.integers(0, spec.V.size, n)]
    return (rng.uniform(0, spec.T, n), rng.uniform(lo + 0.1, hi, n),
            rng.uniform(-3, 3, n), rng.uniform(-2, 2, n), u, v)


@pytest.mark.parametrize("example", EXAMPLES)
def test_config_round_trip_is_bit_identical(example, rng):
    spec = build_example(example)
    doc = json.loads(json.dumps(problem_to_config(spec)))
    again = problem_from_config(doc)
    t, x, y, z, u, v = sample_points(spec, 1000, rng)
    if example == "ex53":
        y = -np.abs(y) - 0.1
    assert np.array_equal(spec.b(t, x, u, v), again.b(t, x, u, v))
    assert np.array_equal(spec.sigma(t, x, u, v), again.sigma(t, x, u, v))
    assert np.array_equal(spec.g(t, x, y, z, u, v), again.g(t, x, y, z, u, v))
    assert np.array_equal(spec.h(x), again.h(x))
    assert problem_to_config(again) == problem_to_config(spec)


def test_dump_and_load_config(tmp_path):
    spec = build_example("ex51")
    path = tmp_path / "cfg.json"
    dump_config(spec, path, grid={"x_lo": -1, "x_hi": 1, "N_x": 21})
    loaded = load_config(path)
    assert problem_to_config(loaded["problem"]) == problem_to_config(spec)
    assert loaded["grid"]["N_x"] == 21


def test_unknown_and_missing_keys_are_named():
    doc = problem_to_config(build_example("ex51"))
    with pytest.raises(ConfigError, match="bogus"):
        problem_from_config({**doc, "bogus": 1})
    del doc["terminal"]
    with pytest.raises(ConfigError, match="terminal"):
        problem_from_config(doc)
    with pytest.raises(ConfigError, match="unknown coefficient operator"):
        parse_expr({"sinh": "x"})


def test_validate_examples_pass():
    for example in EXAMPLES:
        report = validate_problem(build_example(example))
        assert report.passed, report.checks


def test_validate_flags_non_monotone_generator():
    report = validate_problem(simple({"pow": ["y", 3]}, theta=0.0, eta=1.0))
    assert not report.passed
    assert report.checks["monotone_y"]["violation"] > 0
    assert validate_problem(simple({"neg": "y"}, theta=0.0)).passed


def test_validate_rejects_non_finite_coefficients():
    spec = simple(0.0, drift={"log": "x"}, sample_box=(-1.0, 1.0))
    with pytest.raises(Exception) as info:
        validate_problem(spec)
    assert isinstance(info.value, (ValidationError, ArithmeticError))


def test_spec_rejects_bad_dependencies():
    with pytest.raises(ConfigError):
        simple(0.0, drift="y")
    with pytest.raises(ConfigError):
        simple(0.0, terminal="t")
    with pytest.raises(ConfigError):
        simple(0.0, T=0.0)


def test_control_set_mesh():
    c = ControlSet.box((0.0, 1.0), (2.0, 3.0), points=3)
    assert c.size == 9 and c.dim == 2
    assert np.allclose(c.points[0], [0.0, 2.0]) and np.allclose(c.points[1], [0.0, 2.5])
    assert c.contains([0.5, 3.0]) and not c.contains([0.4, 3.0])
    assert c.index_of([1.0, 3.0]) == 8
    s = ControlSet.single(0.25)
    assert s.size == 1 and s.mesh_size == 0.0


def test_grid_spec():
    g = GridSpec(-2.0, 2.0, 401, 100, 1.0)
    assert g.dx == pytest.approx(0.01) and g.dt == pytest.approx(0.01)
    assert len(g.x) == 401 and len(g.t) == 101
    mask = g.interior_mask(0.3)
    assert g.x[mask].min() == pytest.approx(-0.8) and g.x[mask].max() == pytest.approx(0.8)
    with pytest.raises(ConfigError):
        GridSpec(1.0, 0.0, 10, 10, 1.0)
    with pytest.raises(ConfigError):
        GridSpec(0.0, 1.0, 2, 10, 1.0)
