import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdgame import ControlSet, ProblemSpec, build_example
from sdgame.hamiltonian import (HamiltonianQuery, eval_hz, hamiltonian, hz_tensor,
                                isaacs_gap, lower_hamiltonian, upper_hamiltonian)

finite = st.floats(-3, 3, allow_nan=False)


def test_eval_hz_example_values(ex51):
    assert eval_hz(HamiltonianQuery(0.0, 1.0, 0.5, 1.0, 1.0), 0.0, 0.0, ex51) == 0.0
    assert eval_hz(HamiltonianQuery(0.0, 1.0, 0.5, 1.0, 2.0), 1.0, -1.0, ex51) == 1.0


@pytest.mark.parametrize("x", np.linspace(-2, 2, 9))
def test_lower_hamiltonian_vanishes_on_classical_solution(ex51, x):
    q = HamiltonianQuery(0.3, x, 0.5 * x * x, x, 1.0)
    assert abs(lower_hamiltonian(q, ex51).value) <= 1e-14
    assert abs(upper_hamiltonian(q, ex51).value) <= 1e-14


def test_upper_value_and_saddle_controls(ex51):
    q = HamiltonianQuery(0.0, 1.0, 0.5, 1.0, 1.0)
    h = upper_hamiltonian(q, ex51)
    assert h.value == 0.0
    low = lower_hamiltonian(q, ex51)
    assert low.star.tolist() == [0.0] and low.response[low.star_index].tolist() == [0.0]


def test_z_dependent_example(ex52):
    q = HamiltonianQuery(1.0, 1.0, -1.0, -1.0, 0.0)
    assert lower_hamiltonian(q, ex52).value == pytest.approx(-1.0, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1), x=finite, y=finite, p=finite, A=finite)
def test_isaacs_gap_non_negative(t, x, y, p, A):
    q = HamiltonianQuery(t, x, y, p, A)
    for spec in (build_example("ex51"), build_example("ex52")):
        assert isaacs_gap(q, spec) >= -1e-12


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1), x=finite, y=finite, p=finite, A=finite, dA=st.floats(0, 3))
def test_degenerate_ellipticity(t, x, y, p, A, dA):
    spec = build_example("ex51")
    for side in ("lower", "upper"):
        h1 = hamiltonian(HamiltonianQuery(t, x, y, p, A), spec, side).value
        h2 = hamiltonian(HamiltonianQuery(t, x, y, p, A + dA), spec, side).value
        assert h1 <= h2 + 1e-12


@settings(max_examples=100, deadline=None)
@given(t=st.floats(0, 1), x=finite, y=finite, dy=st.floats(0, 3), p=finite, A=finite)
def test_monotone_generator_gives_decreasing_hamiltonian(t, x, y, dy, p, A):
    spec = ProblemSpec(drift="u", diffusion="v", generator={"add": [{"neg": "y"}, "u"]},
                       terminal=0.0, T=1.0, U=ControlSet.box((0.0, 1.0), points=5),
                       V=ControlSet.box((0.5, 1.0), points=5))
    h1 = lower_hamiltonian(HamiltonianQuery(t, x, y, p, A), spec).value
    h2 = lower_hamiltonian(HamiltonianQuery(t, x, y + dy, p, A), spec).value
    assert h2 <= h1 + 1e-12


def test_single_point_sets_close_the_gap(rng):
    spec = build_example("ex51").replace(U=ControlSet.single(0.3), V=ControlSet.single(-0.6))
    for _ in range(50):
        q = HamiltonianQuery(*rng.uniform(-2, 2, 5))
        assert isaacs_gap(q, spec) == 0.0


def test_mesh_refinement_changes_value_at_mesh_rate(rng):
    coarse = build_example("ex51", points=11)
    fine = build_example("ex51", points=21)
    worst = 0.0
    for _ in range(200):
        t, x, y, p, A = rng.uniform(-2, 2, 5)
        q = HamiltonianQuery(abs(t) / 2, x, y, p, A)
        worst = max(worst, abs(lower_hamiltonian(q, fine).value
                               - lower_hamiltonian(q, coarse).value))
    # a mesh of step 0.1 misses the optimum by at most (Lipschitz in controls) * 0.1
    assert worst <= 10.0 * 0.1


def test_hz_tensor_broadcasts(ex51):
    x = np.linspace(-1, 1, 7)
    M = hz_tensor(ex51, 0.0, x, 0.0, x, 1.0)
    assert M.shape == (7, ex51.U.size, ex51.V.size)
    assert M[3, 0, -1] == eval_hz(HamiltonianQuery(0.0, 0.0, 0.0, 0.0, 1.0), 0.0, 0.0, ex51)


def test_query_rejects_non_finite():
    with pytest.raises(ValueError):
        HamiltonianQuery(0.0, np.nan, 0.0, 0.0, 0.0)
