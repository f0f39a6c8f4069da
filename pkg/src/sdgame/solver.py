"""Monotone explicit finite-difference solver for the lower/upper HJBI equations.

Backward march from the terminal data: at every node and control pair the
discrete operator

    1/2 sigma^2 D2 W + b D(+/-) W + g(t, x, y, (Dc W) sigma, u, v)

is formed with the upwind direction chosen per pair, then reduced by sup-inf
(lower) or inf-sup (upper).  The ``y`` argument is the unknown new value,
found per node by scalar fixed-point iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .coefficients import Expr, Structure
from .errors import CFLError, DomainError, NumericalAbort
from .problem import LOWER, GridSpec, ProblemSpec, ValueField, check_side, growth_constant

log = logging.getLogger(__name__)

EPS_DOM = 1e-6
Y_MAX = 1e6
Z_REGIME_FLAG = ("verification-theorem regime: generator depends on z, "
                 "viscosity uniqueness not covered")


@dataclass(frozen=True)
class CFLReport:
    max_stable_dt: float
    dx: float
    max_sigma2: float
    max_drift: float
    y_term: float
    unconstrained: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.unconstrained:
            d["max_stable_dt"] = "unconstrained"
        return d


class StepTables:
    """Coefficient tables over (node, control pair) for one coefficient time."""

    def __init__(self, spec: ProblemSpec, x: np.ndarray, structure: Structure | None):
        self.spec = spec
        self.x = x
        self.structure = structure
        Up, Vp = spec.U.points, spec.V.points
        self.n_u, self.n_v = len(Up), len(Vp)
        self.shape = (len(x), self.n_u, self.n_v)
        self._x = x[:, None, None]
        self._u = Up[None, :, None, :]
        self._v = Vp[None, None, :, :]
        exprs = [spec.drift, spec.diffusion]
        if structure is not None:
            exprs += [e for e in (structure.g0, structure.gz, structure.gy, structure.gp)
                      if e is not None]
        else:
            exprs.append(spec.generator)
        self.time_dependent = any(e.depends_on("t") for e in exprs)
        self._cache_t = None

    def table(self, expr: Expr | None, t: float) -> np.ndarray:
        n = self.shape[0]
        if expr is None:
            return np.zeros((n, self.n_u * self.n_v))
        val = expr.evaluate({"t": t, "x": self._x, "u": self._u, "v": self._v})
        out = np.ascontiguousarray(np.broadcast_to(val, self.shape).reshape(n, -1), dtype=float)
        if not np.all(np.isfinite(out)):
            i = int(np.argwhere(~np.isfinite(out))[0][0])
            raise DomainError("non-finite coefficient", {"t": t, "x": float(self.x[i])})
        return out

    def at(self, t: float) -> dict:
        if self._cache_t is not None and (not self.time_dependent or self._cache_t[0] == t):
            return self._cache_t[1]
        drift = self.table(self.spec.drift, t)
        sig = self.table(self.spec.diffusion, t)
        tab = {"drift": drift, "sigma": sig, "half_s2": 0.5 * sig * sig}
        s = self.structure
        if s is not None:
            tab["g0"] = self.table(s.g0, t)
            tab["gzs"] = self.table(s.gz, t) * sig
            tab["gy"] = self.table(s.gy, t)
            tab["gp"] = self.table(s.gp, t)
        self._cache_t = (t, tab)
        return tab


def _y_band(spec: ProblemSpec) -> tuple[float, float] | None:
    lo, hi = spec.generator.y_domain()
    if math.isinf(lo) and math.isinf(hi):
        return None
    lo = lo + EPS_DOM if math.isfinite(lo) else -Y_MAX
    hi = hi - EPS_DOM if math.isfinite(hi) else Y_MAX
    return lo, hi


def _sample_times(spec: ProblemSpec, tables: StepTables, count: int = 11) -> np.ndarray:
    return np.linspace(0.0, spec.T, count) if tables.time_dependent else np.array([spec.T])


def cfl_check(spec: ProblemSpec, grid: GridSpec) -> CFLReport:
    """Largest stable time step of the explicit monotone scheme on ``grid``."""
    dx = grid.dx
    if not dx > 0:
        raise CFLError("zero spatial step")
    x = grid.x
    structure = spec.generator.structure()
    tables = StepTables(spec, x, structure)
    max_s2 = max_b = 0.0
    for t in _sample_times(spec, tables):
        tab = tables.at(float(t))
        max_s2 = max(max_s2, float(np.max(tab["sigma"] ** 2)))
        if structure is not None:
            eff = np.abs(tab["drift"]) + np.abs(tab["gzs"])
        elif spec.z_dependent:
            eff = np.abs(tab["drift"]) + spec.lip_C * np.abs(tab["sigma"])
        else:
            eff = np.abs(tab["drift"])
        max_b = max(max_b, float(np.max(eff)))
    y_term = 0.0
    if spec.y_dependent:
        y_est = float(np.max(np.abs(spec.h(x))))
        y_term = abs(spec.theta) + spec.eta * max(1.0, y_est ** (spec.p - 1.0))
    denom = max_s2 + dx * max_b + dx * dx * y_term
    if denom == 0.0:
        return CFLReport(math.inf, dx, max_s2, max_b, y_term, True)
    return CFLReport(dx * dx / denom, dx, max_s2, max_b, y_term, False)


def cfl_grid(spec: ProblemSpec, x_lo: float, x_hi: float, N_x: int,
             safety: float = 0.9) -> GridSpec:
    """Grid whose time step sits at ``safety`` times the CFL bound."""
    probe = GridSpec(x_lo, x_hi, N_x, 1, spec.T)
    rep = cfl_check(spec, probe)
    if rep.unconstrained:
        return probe
    n_t = max(1, math.ceil(spec.T / (safety * rep.max_stable_dt)))
    return probe.with_steps(n_t)


def _save_indices(n_t: int, save_every: int, pairs: bool = False) -> np.ndarray:
    idx = set(range(0, n_t + 1, max(1, int(save_every))))
    if pairs:
        idx |= {k + 1 for k in idx if k < n_t}
    idx.add(n_t)
    return np.array(sorted(idx))


def solve(spec: ProblemSpec, grid: GridSpec, side: str | None = None, *,
          backend: str = "auto", threads: int = 1, fp_tol: float = 1e-12,
          fp_maxit: int = 50, save_every: int = 1, pairs: bool = False,
          check_cfl: bool = True) -> ValueField:
    """Solve the HJBI equation backward in time on ``grid``.

    ``side`` defaults to the game's own side.  Raises :class:`CFLError` when
    ``grid.dt`` exceeds the stability bound and :class:`NumericalAbort` or
    :class:`DomainError` (with the offending ``(t, x)``) during the march.
    Every ``save_every``-th slice is stored; ``pairs`` also stores the slice
    one step later, which the DPP residual needs.
    """
    side = check_side(side or spec.side)
    if abs(grid.T - spec.T) > 1e-12 * spec.T:
        raise ValueError("grid horizon differs from the problem horizon")
    rep = cfl_check(spec, grid)
    if check_cfl and grid.dt > rep.max_stable_dt * (1 + 1e-12):
        raise CFLError(f"time step {grid.dt:.6g} exceeds CFL bound {rep.max_stable_dt:.6g}",
                       {"dt": grid.dt, "max_stable_dt": rep.max_stable_dt})
    x, t = grid.x, grid.t
    dx, dt = grid.dx, grid.dt
    structure = spec.generator.structure()
    tables = StepTables(spec, x, structure)
    band = _y_band(spec)
    lower = side == LOWER

    w = np.array(spec.h(x), dtype=float)
    if not np.all(np.isfinite(w)):
        i = int(np.argmax(~np.isfinite(w)))
        raise NumericalAbort("non-finite terminal data", {"t": grid.T, "x": float(x[i])})
    _check_band(w, band, grid.T, x)

    keep = _save_indices(grid.N_t, save_every, pairs)
    slots = {int(k): j for j, k in enumerate(keep)}
    values = np.empty((len(keep), grid.N_x))
    values[slots[grid.N_t]] = w

    status = np.zeros(grid.N_x, dtype=np.int32)
    iters = np.zeros(grid.N_x, dtype=np.int32)
    out = np.empty(grid.N_x)
    max_iters = 0
    if structure is not None:
        kern = kernels.get_backend(backend)
        phi = structure.phi
        qn = np.asarray(phi.nodes if phi else (0.0,), dtype=float)
        qw = np.asarray(phi.weights if phi else (1.0,), dtype=float)
        s, e = (phi.sign, phi.exponent) if phi else (1.0, 1.0)
        y_dep = structure.y_dependent
        used_backend = "compiled" if kern is not kernels._fallback else "numpy"
    else:
        used_backend = "numpy-generic"

    for k in range(grid.N_t - 1, -1, -1):
        tc = float(t[k + 1])
        tab = tables.at(tc)
        if structure is not None:
            kern.hjbi_step(w, out, tab["half_s2"], tab["drift"], tab["g0"], tab["gzs"],
                           tab["gy"], tab["gp"], qn, qw, s, e, tables.n_u, tables.n_v,
                           lower, y_dep, phi is not None, dx, dt, fp_tol, fp_maxit,
                           status, iters, threads)
        else:
            _generic_step(spec, tab, tc, x, w, out, lower, tables, dx, dt, fp_tol, fp_maxit,
                          status, iters)
        if np.any(status):
            _raise_status(status, float(t[k]), x)
        max_iters = max(max_iters, int(iters.max()))
        w, out = out, w
        _check_band(w, band, float(t[k]), x)
        if k in slots:
            values[slots[k]] = w

    info = {
        "side": side,
        "backend": used_backend,
        "cfl": rep.to_dict(),
        "dt": dt,
        "dx": dx,
        "growth_constant": growth_constant(values, x),
        "max_fixed_point_iterations": max_iters,
        "z_dependent": spec.z_dependent,
    }
    if spec.z_dependent:
        info["regime"] = Z_REGIME_FLAG
    values.setflags(write=False)
    return ValueField(grid=grid, side=side, values=values, times=t[keep], info=info)


def _check_band(w, band, t, x):
    if band is None:
        return
    bad = (w < band[0]) | (w > band[1])
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError("value left the generator's admissible band",
                          {"t": t, "x": float(x[i]), "y": float(w[i])})


def _raise_status(status, t, x):
    i = int(np.argmax(status != 0))
    code = int(status[i])
    where = {"t": t, "x": float(x[i])}
    if code == 2:
        raise DomainError("generator evaluated outside its domain", where)
    if code == 3:
        raise NumericalAbort("fixed-point iteration for y did not converge", where)
    raise NumericalAbort("non-finite value", where)


def _generic_step(spec, tab, t, x, w, out, lower, tables, dx, dt, tol, maxit, status, iters):
    """numpy path for generators without the structured form."""
    from ._fallback import NOCONV, NONFINITE, _reduce

    n = len(w)
    d2 = np.zeros(n)
    dp, dm, dc = np.empty(n), np.empty(n), np.empty(n)
    d2[1:-1] = ((w[2:] - 2.0 * w[1:-1]) + w[:-2]) / (dx * dx)
    dp[1:-1] = (w[2:] - w[1:-1]) / dx
    dm[1:-1] = (w[1:-1] - w[:-2]) / dx
    dc[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
    for i, j in ((0, 1), (n - 1, n - 1)):
        dp[i] = dm[i] = dc[i] = (w[j] - w[j - 1]) / dx
    drift, sig = tab["drift"], tab["sigma"]
    up = np.where(drift > 0.0, drift * dp[:, None], drift * dm[:, None])
    static = tab["half_s2"] * d2[:, None] + up
    z = dc[:, None] * sig
    xs = np.broadcast_to(x[:, None], drift.shape)
    Up, Vp = spec.U.points, spec.V.points
    n_u, n_v = tables.n_u, tables.n_v
    u = np.broadcast_to(Up[:, None, :], (n_u, n_v, Up.shape[1])).reshape(n_u * n_v, -1)
    v = np.broadcast_to(Vp[None, :, :], (n_u, n_v, Vp.shape[1])).reshape(n_u * n_v, -1)
    y_dep = spec.y_dependent
    status[:] = 0
    iters[:] = 0
    y = w.copy()
    active = np.ones(n, dtype=bool)
    for it in range(maxit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[idx]
        try:
            g = spec.g(t, xs[idx], ya[:, None], z[idx], u[None], v[None])
        except DomainError as exc:
            raise DomainError("generator evaluated outside its domain",
                              {"t": t, **{k: v for k, v in exc.point.items() if k != "t"}}) \
                from None
        best = _reduce(static[idx] + g, n_u, n_v, lower)
        ynew = w[idx] + dt * best
        fin = np.isfinite(ynew)
        status[idx[~fin]] = NONFINITE
        active[idx[~fin]] = False
        idx, ya, ynew = idx[fin], ya[fin], ynew[fin]
        if not y_dep:
            out[idx] = ynew
            iters[idx] = 1
            active[idx] = False
            break
        done = np.abs(ynew - ya) <= tol * (1.0 + np.abs(ynew))
        out[idx[done]] = ynew[done]
        iters[idx[done]] = it + 1
        active[idx[done]] = False
        y[idx[~done]] = ynew[~done]
    left = np.flatnonzero(active)
    if left.size:
        status[left] = NOCONV


# --------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    dx: list[float]
    dt: list[float]
    errors: list[float]
    orders: list[float]
    exact: bool
    monotone: bool
    reference: str

    @property
    def observed_order(self) -> float:
        """Order between the two finest grids (``inf`` when errors vanish)."""
        if self.exact:
            return math.inf
        return self.orders[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observed_order"] = "exact" if self.exact else self.observed_order
        return d


EXACT_TOL = 1e-10


def interior_error(field: ValueField, analytic, margin: float = 0.3) -> float:
    mask = field.grid.interior_mask(margin)
    x = field.grid.x[mask]
    ref = analytic(field.times[:, None], x[None, :])
    return float(np.max(np.abs(field.values[:, mask] - ref)))


def convergence_study(spec: ProblemSpec, grids: list[GridSpec], side: str | None = None,
                      analytic=None, margin: float = 0.3, **solve_kw) -> ConvergenceReport:
    """Observed L-infinity convergence order over nested grids.

    With ``analytic`` (a vectorized ``(t, x) -> W``) errors are measured on all
    stored slices inside the interior window; otherwise the finest grid's
    ``t = 0`` slice serves as reference.
    """
    if len(grids) < 3:
        raise ValueError("convergence study needs at least three grids")
    grids = sorted(grids, key=lambda g: -g.dx)
    fields = [solve(spec, g, side, **solve_kw) for g in grids]
    if analytic is not None:
        errors = [interior_error(f, analytic, margin) for f in fields]
        used = fields
        reference = "analytic"
    else:
        fine = fields[-1]
        errors = []
        for f in fields[:-1]:
            mask = f.grid.interior_mask(margin)
            ref = np.interp(f.grid.x[mask], fine.grid.x, fine.values[0])
            errors.append(float(np.max(np.abs(f.values[0][mask] - ref))))
        used = fields[:-1]
        reference = "finest grid"
    dxs = [f.grid.dx for f in used]
    exact = all(e <= EXACT_TOL for e in errors)
    orders = []
    for i in range(len(errors) - 1):
        if errors[i] <= EXACT_TOL or errors[i + 1] <= EXACT_TOL:
            orders.append(math.inf)
        else:
            orders.append(math.log(errors[i] / errors[i + 1]) / math.log(dxs[i] / dxs[i + 1]))
    monotone = all(errors[i + 1] <= errors[i] for i in range(len(errors) - 1))
    if not monotone:
        log.warning("non-monotone error sequence %s", errors)
    return ConvergenceReport(dxs, [f.grid.dt for f in used], errors, orders, exact, monotone,
                             reference)
