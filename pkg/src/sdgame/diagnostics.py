"""Regularity and uniqueness-class measurements on solved fields.

All estimates are measurements: constants the theory leaves implicit are
reported, never asserted against a specific value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .problem import GridSpec, ProblemSpec, ValueField

EXACT_TOL = 1e-12


# --------------------------------------------------------------------------
# reference function


def _ell(x):
    return 0.5 * np.log(x * x + 1.0)


def kappa(x):
    """``(1/2 log(x^2 + 1) + 1)^2``."""
    x = np.asarray(x, dtype=float)
    return (_ell(x) + 1.0) ** 2


def kappa_x(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * (_ell(x) + 1.0) * x / (x * x + 1.0)


def kappa_xx(x):
    x = np.asarray(x, dtype=float)
    q = x * x + 1.0
    return 2.0 * (x / q) ** 2 + 2.0 * (_ell(x) + 1.0) * (1.0 - x * x) / (q * q)


@dataclass(frozen=True)
class ReferenceFunctionSpec:
    """``nu(t, x) = exp((lambda (T - t) + Upsilon) kappa(x))``."""

    Upsilon: float
    lam: float
    T: float

    def __post_init__(self):
        if not (self.Upsilon > 0 and self.lam > 0):
            raise ConfigError("Upsilon and lambda must be positive")

    @property
    def t1(self) -> float:
        return self.T - self.Upsilon / self.lam

    def exponent(self, t):
        return self.lam * (self.T - np.asarray(t, dtype=float)) + self.Upsilon

    def nu(self, t, x):
        return np.exp(self.exponent(t) * kappa(x))

    def nu_t(self, t, x):
        return -self.lam * kappa(x) * self.nu(t, x)

    def nu_x(self, t, x):
        return self.exponent(t) * kappa_x(x) * self.nu(t, x)

    def nu_xx(self, t, x):
        a = self.exponent(t)
        return (a * kappa_xx(x) + (a * kappa_x(x)) ** 2) * self.nu(t, x)

    def scaled_operator(self, spec: ProblemSpec, t, x) -> np.ndarray:
        """``(d_t nu + sup_{u,v} {1/2 sigma^2 D2 nu + b D nu}) / nu`` on ``(t, x)`` nodes.

        Dividing by ``nu > 0`` keeps the sign and avoids overflow for large
        ``lambda``.
        """
        t = np.asarray(t, dtype=float)[..., None, None]
        x = np.asarray(x, dtype=float)[..., None, None]
        u = spec.U.points[:, None, :]
        v = spec.V.points[None, :, :]
        a = self.exponent(t)
        kx, kxx = kappa_x(x), kappa_xx(x)
        s = spec.sigma(t, x, u, v)
        b = spec.b(t, x, u, v)
        inner = 0.5 * s * s * (a * kxx + (a * kx) ** 2) + b * a * kx
        return -self.lam * kappa(x[..., 0, 0]) + np.max(inner, axis=(-2, -1))


@dataclass
class LambdaReport:
    success: bool
    lam: float | None
    margin: float
    t1: float | None
    worst_node: dict
    chain: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _interval_margin(spec, Upsilon, lam, t_hi, grid):
    ref = ReferenceFunctionSpec(Upsilon, lam, t_hi)
    t_lo = max(0.0, ref.t1)
    ts = grid.t[(grid.t >= t_lo) & (grid.t <= t_hi)]
    ts = np.unique(np.concatenate([[t_lo, t_hi], ts]))
    T_, X_ = np.meshgrid(ts, grid.x, indexing="ij")
    vals = ref.scaled_operator(spec, T_, X_)
    k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return float(vals[k]), {"t": float(T_[k]), "x": float(X_[k])}, t_lo


def find_lambda(spec: ProblemSpec, Upsilon: float, grid: GridSpec,
                max_doublings: int = 20) -> LambdaReport:
    """Smallest ``lambda = 2^j`` making the reference-function inequality strict.

    The operator is checked at every grid node of ``[t1, T] x [x_lo, x_hi]``
    and every control pair.  On success the check is chained backward over
    ``[t2, t1], [t3, t2], ...`` (reusing ``lambda``) until time 0.  The
    reported margin is the worst value of the operator divided by ``nu``.
    """
    worst = (math.inf, {})
    for j in range(max_doublings + 1):
        lam = float(2 ** j)
        margin, node, _ = _interval_margin(spec, Upsilon, lam, spec.T, grid)
        if margin < 0:
            break
        if margin < worst[0]:
            worst = (margin, node)
    else:
        return LambdaReport(False, None, worst[0], None, worst[1])
    chain = []
    t_hi = spec.T
    overall = margin
    while True:
        m, nd, t_lo = _interval_margin(spec, Upsilon, lam, t_hi, grid)
        chain.append({"t_lo": t_lo, "t_hi": t_hi, "margin": m, "worst_node": nd})
        overall = max(overall, m)
        if t_lo <= 0.0:
            break
        t_hi = t_lo
    ok = all(c["margin"] < 0 for c in chain)
    return LambdaReport(ok, lam, overall, spec.T - Upsilon / lam, node, chain)


# --------------------------------------------------------------------------
# regularity


def _window(vf: ValueField, x_window):
    x = vf.grid.x
    if x_window is None:
        return np.ones(len(x), dtype=bool)
    return (x >= x_window[0] - 1e-12) & (x <= x_window[1] + 1e-12)


def lipschitz_x(vf: ValueField, x_window=None) -> dict:
    """Largest adjacent-node slope ``|dW| / dx``, per stored slice and overall."""
    mask = _window(vf, x_window)
    w = vf.values[:, mask]
    slopes = np.max(np.abs(np.diff(w, axis=1)), axis=1) / vf.grid.dx
    return {"K": float(slopes.max()), "per_slice": slopes, "times": vf.times}


def holder_t(vf: ValueField, x_window=None, max_lag_fraction: float = 0.125) -> dict:
    """Fit ``sup |W(t + h) - W(t)| ~ c h^a`` over a geometric set of lags ``h``.

    Reports the fitted exponent ``a`` and the coefficient ``c`` of the
    square-root bound; a time-constant field reports ``exact``.
    """
    if len(vf.times) < 4:
        raise ConfigError("holder_t needs at least four time slices")
    mask = _window(vf, x_window)
    w = vf.values[:, mask]
    times = vf.times
    step = np.min(np.diff(times))
    max_lag = max(step, max_lag_fraction * (times[-1] - times[0]))
    lags, sups = [], []
    s = 1
    while s < len(times):
        h = times[s:] - times[:-s]
        if np.min(h) > max_lag * (1 + 1e-12) and lags:
            break
        lags.append(float(np.mean(h)))
        sups.append(float(np.max(np.abs(w[s:] - w[:-s]))))
        s *= 2
    lags, sups = np.array(lags), np.array(sups)
    c_half = float(np.max(sups / np.sqrt(lags)))
    if np.all(sups <= EXACT_TOL):
        return {"c": 0.0, "exponent": None, "exact": True, "lags": lags, "sups": sups}
    good = sups > EXACT_TOL
    if good.sum() < 2:
        return {"c": c_half, "exponent": None, "exact": False, "lags": lags, "sups": sups}
    slope = float(np.polyfit(np.log(lags[good]), np.log(sups[good]), 1)[0])
    return {"c": c_half, "exponent": slope, "exact": False, "lags": lags, "sups": sups}


def lipschitz_t_interior(vf: ValueField, delta: float, x_window=None) -> dict:
    """``max |dW| / dt`` over adjacent stored slices inside ``[0, T - delta]``."""
    T = vf.times[-1]
    if not 0 < delta < T:
        raise ConfigError("delta must lie in (0, T)")
    keep = vf.times <= T - delta + 1e-12
    if keep.sum() < 3:
        raise ConfigError("need at least three slices in [0, T - delta]")
    w = vf.values[keep][:, _window(vf, x_window)]
    dt = np.diff(vf.times[keep])
    rates = np.max(np.abs(np.diff(w, axis=0)), axis=1) / dt
    return {"estimate": float(rates.max()), "delta": delta}


def refinement_ratios(estimates) -> list[float]:
    """Successive ratios ``max(a, b) / min(a, b)`` of refinement estimates."""
    out = []
    for a, b in zip(estimates[:-1], estimates[1:]):
        lo, hi = min(a, b), max(a, b)
        out.append(1.0 if hi == 0 else (math.inf if lo == 0 else hi / lo))
    return out


def gamma_weight(x, Upsilon: float):
    """``exp(-Upsilon [log (x^2 + 1)^(1/2)]^2)``."""
    return np.exp(-Upsilon * _ell(np.asarray(x, dtype=float)) ** 2)


def gamma_membership(vf: ValueField, Upsilon: float = 1.0, min_reach: float = 4.0,
                     rtol: float = 1e-12) -> dict:
    """Check that the weighted envelope ``max_t |W| gamma_weight`` decays outward.

    The test runs on the outer half of the domain (``|x| >= max|x| / 2``),
    separately on each side of the origin.  Domains not reaching
    ``|x| >= min_reach`` give an inconclusive verdict.
    """
    x = vf.grid.x
    reach = float(np.max(np.abs(x)))
    if reach < min_reach:
        return {"verdict": "inconclusive", "reach": reach}
    env = np.max(np.abs(vf.values), axis=0) * gamma_weight(x, Upsilon)
    outer = np.abs(x) >= 0.5 * reach
    worst = 0.0
    for side in (x > 0, x < 0):
        sel = outer & side
        if sel.sum() < 2:
            continue
        order = np.argsort(np.abs(x[sel]))
        e = env[sel][order]
        rise = np.diff(e) - rtol * np.maximum(e[:-1], 1e-300)
        worst = max(worst, float(np.max(rise)))
    return {"verdict": "pass" if worst <= 0 else "fail", "reach": reach,
            "max_increase": worst, "Upsilon": Upsilon}
