"""Feedback extraction, saddle-point checks and the one-step DPP residual."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bsde import bootstrap_stderr, simulate_paths, solve_bsde
from .errors import ValidationError
from .hamiltonian import hz_tensor, reduce_lower, reduce_upper
from .problem import LOWER, FeedbackPair, ProblemSpec, ValueField

GH_NODES = 9


def field_derivatives(w: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central ``DW``, ``D2W`` with boundary nodes copied from their neighbour.

    Returns ``(DW, D2W, boundary_flag)``.
    """
    n = w.shape[-1]
    d1 = np.empty_like(w)
    d2 = np.empty_like(w)
    d1[..., 1:-1] = (w[..., 2:] - w[..., :-2]) / (2.0 * dx)
    d2[..., 1:-1] = ((w[..., 2:] - 2.0 * w[..., 1:-1]) + w[..., :-2]) / (dx * dx)
    for a in (d1, d2):
        a[..., 0] = a[..., 1]
        a[..., -1] = a[..., -2]
    flag = np.zeros(n, dtype=bool)
    flag[[0, -1]] = True
    return d1, d2, flag


def extract_feedback(spec: ProblemSpec, vf: ValueField, max_slices: int = 201) -> FeedbackPair:
    """Tabulate the optimal feedback and response strategy from a solved field.

    At each node the generalized Hamiltonian is formed with the field's
    central derivatives; for a lower game the response ``beta_hat(t, x, u)``
    minimizes over ``v`` for every ``u`` and ``u_hat`` maximizes the result
    (the upper game mirrors this).  Boundary nodes reuse their neighbour's
    derivatives and are flagged.  At most ``max_slices`` evenly spaced time
    slices are kept.
    """
    if len(vf.times) > max_slices:
        keep = np.unique(np.round(np.linspace(0, len(vf.times) - 1, max_slices)).astype(int))
    else:
        keep = np.arange(len(vf.times))
    times = vf.times[keep]
    x = vf.grid.x
    dx = vf.grid.dx
    lower = vf.side == LOWER
    n_lead = spec.U.size if lower else spec.V.size
    leader = np.empty((len(keep), len(x)), dtype=np.intp)
    response = np.empty((len(keep), len(x), n_lead), dtype=np.intp)
    boundary = None
    for j, k in enumerate(keep):
        w = vf.values[k]
        d1, d2, boundary = field_derivatives(w, dx)
        M = hz_tensor(spec, times[j], x, w, d1, d2)
        _, star, resp = reduce_lower(M) if lower else reduce_upper(M)
        leader[j] = star
        response[j] = resp
    for a in (times, leader, response, boundary):
        a.setflags(write=False)
    return FeedbackPair(side=vf.side, times=times, x=x, U=spec.U, V=spec.V, leader=leader,
                        response=response, boundary=boundary)


def feedback_share(pair: FeedbackPair, u, v, mask: np.ndarray | None = None) -> float:
    """Fraction of (time, node) entries whose played pair equals ``(u, v)``.

    For a lower game the played pair is ``(u_hat, beta_hat(u_hat))``.
    """
    lead_set = pair.U if pair.side == LOWER else pair.V
    resp_set = pair.V if pair.side == LOWER else pair.U
    lead_target, resp_target = (u, v) if pair.side == LOWER else (v, u)
    a = lead_set.index_of(np.atleast_1d(lead_target))
    b = resp_set.index_of(np.atleast_1d(resp_target))
    played = np.take_along_axis(pair.response, pair.leader[..., None], axis=-1)[..., 0]
    hit = (pair.leader == a) & (played == b)
    if mask is not None:
        hit = hit[:, mask]
    return float(np.mean(hit))


# --------------------------------------------------------------------------
# saddle point


@dataclass
class SaddleReport:
    J_star: float
    stderr: float
    tolerance: float
    u_deviations: list[dict] = field(default_factory=list)
    v_deviations: list[dict] = field(default_factory=list)

    @property
    def max_u_violation(self) -> float:
        return max((d["violation"] for d in self.u_deviations), default=0.0)

    @property
    def max_v_violation(self) -> float:
        return max((d["violation"] for d in self.v_deviations), default=0.0)

    @property
    def holds(self) -> bool:
        return self.max_u_violation == 0.0 and self.max_v_violation == 0.0

    def to_dict(self) -> dict:
        return {"J_star": self.J_star, "stderr": self.stderr, "tolerance": self.tolerance,
                "u_deviations": self.u_deviations, "v_deviations": self.v_deviations,
                "max_u_violation": self.max_u_violation,
                "max_v_violation": self.max_v_violation, "holds": self.holds}


def saddle_check(spec: ProblemSpec, pair: FeedbackPair, t: float, x: float,
                 u_devs=(), v_devs=(), M: int = 4000, N: int = 100, seed: int = 0,
                 scheme_tol: float = 2e-2, basis_degree: int = 4,
                 bootstrap: int = 200) -> SaddleReport:
    """Test the saddle inequalities against constant deviations.

    Player I (maximizer) deviating to a constant ``u`` must not gain, and
    player II (minimizer) deviating to a constant ``v`` must not lose less,
    beyond ``3 stderr + scheme_tol``.  All runs share one seed, and each
    stderr is the bootstrap error of the paired pathwise cost difference.
    """
    def run(policy):
        bundle = simulate_paths(spec, policy, t, x, M, N, seed)
        return solve_bsde(bundle, spec, basis_degree)

    star = run(pair.policy())
    report = SaddleReport(star.Y0, bootstrap_stderr(star.pathwise, seed, bootstrap),
                          scheme_tol)
    for player, devs, out in (("u", u_devs, report.u_deviations),
                              ("v", v_devs, report.v_deviations)):
        cset = spec.U if player == "u" else spec.V
        for d in devs:
            d = np.atleast_1d(np.asarray(d, dtype=float))
            if not cset.contains(d):
                raise ValidationError(f"deviation {d.tolist()} is not on the {player} mesh")
            sol = run(pair.deviation_policy(d, player))
            se = bootstrap_stderr(sol.pathwise - star.pathwise, seed, bootstrap)
            gain = sol.Y0 - star.Y0 if player == "u" else star.Y0 - sol.Y0
            violation = max(0.0, gain - 3.0 * se - scheme_tol)
            out.append({"control": d.tolist(), "J": sol.Y0, "stderr": se,
                        "violation": violation})
    return report


# --------------------------------------------------------------------------
# dynamic programming


@dataclass(frozen=True)
class DPPValue:
    value: np.ndarray
    extrapolated: np.ndarray


def _interp(xg, w, xq):
    """Piecewise-linear interpolation with linear extrapolation past the ends."""
    i = np.clip(np.searchsorted(xg, xq) - 1, 0, len(xg) - 2)
    x0, x1 = xg[i], xg[i + 1]
    lam = (xq - x0) / (x1 - x0)
    out = w[i] + lam * (w[i + 1] - w[i])
    return out, (xq < xg[0]) | (xq > xg[-1])


def dpp_one_step(spec: ProblemSpec, x_grid: np.ndarray, w_next: np.ndarray, t: float, x,
                 delta: float, side: str | None = None, fp_tol: float = 1e-12,
                 fp_maxit: int = 50) -> DPPValue:
    """One-interval backward recursion of ``w_next`` from ``t + delta`` to ``t``.

    For every control pair the state makes one Euler step (expectation by
    Gauss-Hermite quadrature over the Brownian increment, ``w_next``
    interpolated linearly), ``z`` is the interpolated central gradient of
    ``w_next`` times ``sigma``, and ``y = E[w] + delta g(t, x, y, z, u, v)`` is
    solved by fixed-point iteration.  A one-step strategy may answer every
    ``u`` separately, so the optimized value is sup-inf (lower) or inf-sup
    (upper) over the meshes.
    """
    side = side or spec.side
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gh_x, gh_w = np.polynomial.hermite_e.hermegauss(GH_NODES)
    gh_w = gh_w / gh_w.sum()
    Up, Vp = spec.U.points, spec.V.points
    X = x[:, None, None]
    u = Up[None, :, None, :]
    v = Vp[None, None, :, :]
    b = spec.b(t, X, u, v)
    s = spec.sigma(t, X, u, v)
    shape = np.broadcast_shapes(b.shape, s.shape)
    b = np.broadcast_to(b, shape)
    s = np.broadcast_to(s, shape)
    ex = np.zeros(shape)
    flag = np.zeros(x.shape, dtype=bool)
    sq = np.sqrt(delta)
    for node, wt in zip(gh_x, gh_w):
        val, out = _interp(x_grid, w_next, X + b * delta + s * sq * node)
        ex += wt * val
        flag |= out.any(axis=(1, 2))
    dx = x_grid[1] - x_grid[0]
    grad, _, _ = field_derivatives(w_next, dx)
    z = _interp(x_grid, grad, x)[0][:, None, None] * s
    y = ex.copy()
    if spec.y_dependent:
        for _ in range(fp_maxit):
            ynew = ex + delta * spec.g(t, X, y, z, u, v)
            done = np.all(np.abs(ynew - y) <= fp_tol * (1.0 + np.abs(ynew)))
            y = ynew
            if done:
                break
    else:
        y = ex + delta * spec.g(t, X, y, z, u, v)
    y = np.broadcast_to(y, shape)
    value = (reduce_lower(y) if side == LOWER else reduce_upper(y))[0]
    return DPPValue(value=value, extrapolated=flag)


def dpp_residual(spec: ProblemSpec, vf: ValueField, margin: float = 0.3,
                 max_pairs: int = 20) -> dict:
    """Max interior ``|dpp_one_step - W|`` over consecutive stored slices.

    Uses slice pairs one solver step apart; at most ``max_pairs`` evenly
    spaced pairs are examined.
    """
    dt = vf.grid.dt
    steps = np.diff(vf.times)
    pairs = np.flatnonzero(np.abs(steps - dt) <= 1e-9 * dt)
    if pairs.size == 0:
        raise ValidationError("field stores no consecutive time slices; solve with save_every=1")
    if pairs.size > max_pairs:
        pairs = pairs[np.unique(np.round(np.linspace(0, pairs.size - 1, max_pairs)).astype(int))]
    mask = vf.grid.interior_mask(margin)
    xg = vf.grid.x
    worst = 0.0
    extrapolated = False
    for j in pairs:
        res = dpp_one_step(spec, xg, vf.values[j + 1], float(vf.times[j]), xg[mask], dt,
                           vf.side)
        worst = max(worst, float(np.max(np.abs(res.value - vf.values[j][mask]))))
        extrapolated |= bool(res.extrapolated.any())
    return {"dt": dt, "max_residual": worst, "pairs": int(pairs.size),
            "extrapolated": extrapolated}
