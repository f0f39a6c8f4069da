"""Problem data, grids and tabulated fields shared by the other modules."""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .coefficients import Expr, as_expr
from .errors import ConfigError, DomainError, ValidationError

LOWER, UPPER = "lower", "upper"


def check_side(side: str) -> str:
    if side not in (LOWER, UPPER):
        raise ConfigError(f"side must be 'lower' or 'upper', got {side!r}")
    return side


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise ConfigError("a control interval needs at least one point")
        if self.points == 1 and self.lo != self.hi:
            raise ConfigError("single-point control interval needs lo == hi")
        if self.points > 1 and not self.lo < self.hi:
            raise ConfigError(f"control interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def nodes(self) -> np.ndarray:
        if self.points == 1:
            return np.array([float(self.lo)])
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def step(self) -> float:
        return 0.0 if self.points == 1 else (self.hi - self.lo) / (self.points - 1)


@dataclass(frozen=True)
class ControlSet:
    """Uniform tensor mesh discretizing a compact box of controls."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        if not self.dims:
            raise ConfigError("control set needs at least one dimension")

    @classmethod
    def box(cls, *bounds: tuple[float, float], points: int = 21) -> "ControlSet":
        return cls(tuple(Interval(float(lo), float(hi), points if hi > lo else 1)
                         for lo, hi in bounds))

    @classmethod
    def single(cls, *values: float) -> "ControlSet":
        return cls(tuple(Interval(float(v), float(v), 1) for v in values))

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def points(self) -> np.ndarray:
        """Mesh points, shape ``(K, dim)``; the first dimension varies slowest."""
        grids = [d.nodes for d in self.dims]
        return np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, self.dim)

    @property
    def size(self) -> int:
        return int(np.prod([d.points for d in self.dims]))

    @property
    def mesh_size(self) -> float:
        return max(d.step for d in self.dims)

    def index_of(self, point) -> int:
        """Index of the mesh point nearest to ``point``."""
        pts = self.points
        d = np.abs(pts - np.atleast_1d(np.asarray(point, dtype=float))).sum(axis=1)
        return int(np.argmin(d))

    def contains(self, point, atol: float = 1e-12) -> bool:
        pts = self.points
        return bool(np.any(np.all(np.abs(pts - np.atleast_1d(point)) <= atol, axis=1)))

    def to_config(self) -> list[dict]:
        return [{"lo": d.lo, "hi": d.hi, "points": d.points} for d in self.dims]


@dataclass(frozen=True)
class ProblemSpec:
    """Full game data.

    Coefficients are expressions from :mod:`sdgame.coefficients`; ``b``,
    ``sigma``, ``g`` and ``h`` evaluate them with numpy broadcasting.  Controls
    are passed as arrays whose last axis is the control dimension.
    """

    drift: Expr
    diffusion: Expr
    generator: Expr
    terminal: Expr
    T: float
    U: ControlSet
    V: ControlSet
    theta: float = 0.0
    eta: float = 1.0
    p: float = 1.0
    lip_C: float = 1.0
    side: str = LOWER
    name: str = ""
    sample_box: tuple[float, float] = (-4.0, 4.0)
    state_dim: int = 1
    noise_dim: int = 1

    def __post_init__(self):
        for f in ("drift", "diffusion", "generator", "terminal"):
            object.__setattr__(self, f, as_expr(getattr(self, f)))
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        check_side(self.side)
        if self.state_dim != 1 or self.noise_dim != 1:
            raise NotImplementedError("only one-dimensional state and noise are implemented")
        if self.p < 1:
            raise ConfigError("growth power p must be >= 1")
        for f in ("drift", "diffusion"):
            if getattr(self, f).depends_on("y", "z"):
                raise ConfigError(f"{f} may not depend on y or z")
        if self.terminal.depends_on("t", "y", "z", "u", "v") or any(
                v[0] in "uv" for v in self.terminal.variables()):
            raise ConfigError("terminal function may depend on x only")

    # coefficient evaluation -------------------------------------------------
    def b(self, t, x, u, v):
        return np.broadcast_to(self.drift.evaluate({"t": t, "x": x, "u": u, "v": v}),
                               np.broadcast_shapes(np.shape(t), np.shape(x),
                                                   np.shape(u)[:-1], np.shape(v)[:-1]))

    def sigma(self, t, x, u, v):
        return np.broadcast_to(self.diffusion.evaluate({"t": t, "x": x, "u": u, "v": v}),
                               np.broadcast_shapes(np.shape(t), np.shape(x),
                                                   np.shape(u)[:-1], np.shape(v)[:-1]))

    def g(self, t, x, y, z, u, v):
        env = {"t": t, "x": x, "y": y, "z": z, "u": u, "v": v}
        try:
            out = self.generator.evaluate(env)
        except DomainError as exc:
            raise DomainError(str(exc), _first_point(env)) from None
        return np.broadcast_to(out, np.broadcast_shapes(
            np.shape(t), np.shape(x), np.shape(y), np.shape(z),
            np.shape(u)[:-1], np.shape(v)[:-1]))

    def h(self, x):
        return np.broadcast_to(self.terminal.evaluate({"x": x}), np.shape(x))

    @property
    def z_dependent(self) -> bool:
        return self.generator.depends_on("z")

    @property
    def y_dependent(self) -> bool:
        return self.generator.depends_on("y")

    def with_generator(self, generator) -> "ProblemSpec":
        return dataclasses.replace(self, generator=as_expr(generator))

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


def _first_point(env: dict) -> dict:
    out = {}
    for k in ("t", "x", "y"):
        a = np.asarray(env.get(k, np.nan), dtype=float)
        out[k] = float(a.flat[0]) if a.size else math.nan
    return out


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice on ``[0, T] x [x_lo, x_hi]``.

    ``N_x`` counts all spatial nodes including both endpoints; ``N_t`` is the
    number of time steps.
    """

    x_lo: float
    x_hi: float
    N_x: int
    N_t: int
    T: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ConfigError("grid needs x_lo < x_hi")
        if self.N_x < 3:
            raise ConfigError("grid needs N_x >= 3")
        if self.N_t < 1:
            raise ConfigError("grid needs N_t >= 1")
        if not self.T > 0:
            raise ConfigError("grid horizon must be positive")

    @classmethod
    def from_dx(cls, x_lo: float, x_hi: float, dx: float, N_t: int, T: float) -> "GridSpec":
        n = int(round((x_hi - x_lo) / dx)) + 1
        return cls(float(x_lo), float(x_hi), n, int(N_t), float(T))

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.N_x - 1)

    @property
    def dt(self) -> float:
        return self.T / self.N_t

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.N_x)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N_t + 1)

    def interior_mask(self, margin: float = 0.3) -> np.ndarray:
        """Nodes at least ``margin`` of the domain width away from both ends."""
        w = self.x_hi - self.x_lo
        x = self.x
        eps = 1e-9 * w
        return (x >= self.x_lo + margin * w - eps) & (x <= self.x_hi - margin * w + eps)

    def with_steps(self, N_t: int) -> "GridSpec":
        return dataclasses.replace(self, N_t=int(N_t))

    def to_config(self) -> dict:
        return {"x_lo": self.x_lo, "x_hi": self.x_hi, "N_x": self.N_x, "N_t": self.N_t}


@dataclass(frozen=True)
class ValueField:
    """Tabulated lower (W) or upper (U) value function.

    ``values[j]`` is the solution at ``times[j]``; the last row is the
    terminal slice.  ``info`` carries solver diagnostics (CFL numbers, growth
    constant, regime flags).
    """

    grid: GridSpec
    side: str
    values: np.ndarray
    times: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def growth_constant(self) -> float:
        return growth_constant(self.values, self.grid.x)

    def at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        return self.values[j]


def growth_constant(values: np.ndarray, x: np.ndarray) -> float:
    """Smallest ``K`` with ``|W| <= K (1 + |x|)`` on the tabulated nodes."""
    return float(np.max(np.abs(values) / (1.0 + np.abs(x))))


@dataclass(frozen=True)
class FeedbackPair:
    """Tabulated feedback control and response strategy.

    For a lower game the leader is player I: ``leader[j, i]`` indexes
    ``u_hat(t_j, x_i)`` in ``U.points`` and ``response[j, i, a]`` indexes
    ``beta_hat(t_j, x_i, u_a)`` in ``V.points``.  For an upper game the roles
    swap (``v_hat`` and ``alpha_hat``).
    """

    side: str
    times: np.ndarray
    x: np.ndarray
    U: ControlSet
    V: ControlSet
    leader: np.ndarray
    response: np.ndarray
    boundary: np.ndarray

    @property
    def _leader_set(self) -> ControlSet:
        return self.U if self.side == LOWER else self.V

    @property
    def _response_set(self) -> ControlSet:
        return self.V if self.side == LOWER else self.U

    def _need(self, side):
        if self.side != side:
            raise AttributeError(f"not available for a {self.side} game")

    @property
    def u_hat(self) -> np.ndarray:
        self._need(LOWER)
        return self.U.points[self.leader]

    @property
    def beta_hat(self) -> np.ndarray:
        self._need(LOWER)
        return self.V.points[self.response]

    @property
    def v_hat(self) -> np.ndarray:
        self._need(UPPER)
        return self.V.points[self.leader]

    @property
    def alpha_hat(self) -> np.ndarray:
        self._need(UPPER)
        return self.U.points[self.response]

    def _locate(self, t, x):
        t = np.broadcast_to(np.asarray(t, dtype=float), np.shape(x))
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1)
        dx = self.x[1] - self.x[0]
        i = np.clip(np.rint((np.asarray(x, dtype=float) - self.x[0]) / dx).astype(int),
                    0, len(self.x) - 1)
        return j, i

    def policy(self) -> Callable:
        """Return ``(t, x) -> (u, v)`` applying the pair by nearest-node lookup."""

        def play(t, x):
            j, i = self._locate(t, x)
            lead = self.leader[j, i]
            resp = self.response[j, i, lead]
            lp, rp = self._leader_set.points[lead], self._response_set.points[resp]
            return (lp, rp) if self.side == LOWER else (rp, lp)

        return play

    def deviation_policy(self, control, player: str) -> Callable:
        """Policy where ``player`` ('u' or 'v') plays a constant control.

        The other player keeps the tabulated behaviour: when the deviating
        player is the leader, the follower answers with its response strategy
        evaluated at the deviation; when the follower deviates, the leader keeps
        its feedback control.
        """
        if player not in ("u", "v"):
            raise ValueError("player must be 'u' or 'v'")
        leader_player = "u" if self.side == LOWER else "v"
        lead_set, resp_set = self._leader_set, self._response_set
        const = np.atleast_1d(np.asarray(control, dtype=float))

        if player == leader_player:
            a = lead_set.index_of(const)

            def play(t, x):
                j, i = self._locate(t, x)
                resp = resp_set.points[self.response[j, i, a]]
                lead = np.broadcast_to(const, resp.shape[:-1] + const.shape)
                return (lead, resp) if self.side == LOWER else (resp, lead)
        else:
            def play(t, x):
                j, i = self._locate(t, x)
                lead = lead_set.points[self.leader[j, i]]
                dev = np.broadcast_to(const, lead.shape[:-1] + const.shape)
                return (lead, dev) if self.side == LOWER else (dev, lead)

        return play


def constant_policy(u, v) -> Callable:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def play(t, x):
        shape = np.shape(x)
        return (np.broadcast_to(u, shape + u.shape), np.broadcast_to(v, shape + v.shape))

    return play


@dataclass(frozen=True)
class PathBundle:
    t0: float
    x0: float
    M: int
    times: np.ndarray
    states: np.ndarray        # (M, N+1)
    u: np.ndarray             # (M, N, du)
    v: np.ndarray             # (M, N, dv)
    dB: np.ndarray            # (M, N)
    seed: int

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class BSDESolution:
    Y: np.ndarray             # (M, N+1)
    Z: np.ndarray             # (M, N)
    Y0: float
    pathwise: np.ndarray      # realized cost h(x_N) + sum_k dt * g_k per path
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# hypothesis sampling


@dataclass
class ValidationReport:
    passed: bool
    tol: float
    checks: dict[str, dict[str, Any]]

    def summary(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "checks": self.checks}


def generator_y_range(spec: ProblemSpec, radius: float = 5.0) -> tuple[float, float]:
    lo, hi = spec.generator.y_domain()
    lo, hi = max(lo, -radius), min(hi, radius)
    if not lo < hi:
        raise ValidationError("generator has an empty y-domain in the sampling window")
    return lo, hi


def validate_problem(spec: ProblemSpec, sample_budget: int = 2000, tol: float = 1e-9,
                     seed: int = 0) -> ValidationReport:
    """Check Lipschitz, monotonicity and growth hypotheses by random sampling.

    Each check reports its worst violation (how far the sampled inequality
    exceeds the declared constant) and where it occurred.
    """
    if sample_budget < 100:
        raise ConfigError("sample_budget must be at least 100")
    rng = np.random.default_rng(seed)
    n = int(sample_budget)
    lo, hi = spec.sample_box
    ylo, yhi = generator_y_range(spec)
    y_ref = min(max(0.0, ylo), yhi)
    Up, Vp = spec.U.points, spec.V.points
    t = rng.uniform(0.0, spec.T, n)
    x1, x2 = rng.uniform(lo, hi, n), rng.uniform(lo, hi, n)
    y1, y2 = rng.uniform(ylo, yhi, n), rng.uniform(ylo, yhi, n)
    z1, z2 = rng.uniform(-5, 5, n), rng.uniform(-5, 5, n)
    u = Up[rng.integers(0, len(Up), n)]
    v = Vp[rng.integers(0, len(Vp), n)]

    def finite(name, arr, **where):
        arr = np.asarray(arr, dtype=float)
        bad = ~np.isfinite(arr)
        if np.any(bad):
            k = int(np.argmax(bad))
            point = {key: float(np.asarray(val)[k]) if np.ndim(val) == 1 else
                     np.asarray(val)[k].tolist() for key, val in where.items()}
            raise ValidationError(f"non-finite {name} at sampled point {point}")
        return arr

    def worst(viol, **where):
        k = int(np.argmax(viol))
        return {"violation": max(float(viol[k]), 0.0),
                "point": {key: (float(val[k]) if np.ndim(val) == 1 else val[k].tolist())
                          for key, val in where.items()}}

    C = spec.lip_C
    checks: dict[str, dict] = {}
    where = dict(t=t, x=x1, x2=x2, u=u, v=v)
    b1 = finite("drift", spec.b(t, x1, u, v), **where)
    b2 = finite("drift", spec.b(t, x2, u, v), **where)
    s1 = finite("diffusion", spec.sigma(t, x1, u, v), **where)
    s2 = finite("diffusion", spec.sigma(t, x2, u, v), **where)
    h1 = finite("terminal", spec.h(x1), x=x1)
    h2 = finite("terminal", spec.h(x2), x=x2)
    gx1 = finite("generator", spec.g(t, x1, y1, z1, u, v), y=y1, **where)
    gx2 = finite("generator", spec.g(t, x2, y1, z1, u, v), y=y1, **where)
    dx = np.abs(x1 - x2)
    lip = np.max(np.stack([np.abs(b1 - b2), np.abs(s1 - s2), np.abs(h1 - h2),
                           np.abs(gx1 - gx2)]), axis=0) - C * dx
    checks["lipschitz_x"] = worst(lip, x=x1, x2=x2, t=t)

    gz2 = finite("generator", spec.g(t, x1, y1, z2, u, v), **where)
    checks["lipschitz_z"] = worst(np.abs(gx1 - gz2) - C * np.abs(z1 - z2), z=z1, z2=z2, t=t)

    gy2 = finite("generator", spec.g(t, x1, y2, z1, u, v), y=y2, **where)
    mono = (y1 - y2) * (gx1 - gy2) - spec.theta * (y1 - y2) ** 2
    checks["monotone_y"] = worst(mono, y=y1, y2=y2, x=x1, t=t)

    g0 = finite("generator", spec.g(t, x1, np.full(n, y_ref), z1, u, v), **where)
    growth = np.abs(gx1 - g0) - spec.eta * (1.0 + np.abs(y1) ** spec.p)
    checks["growth_y"] = worst(growth, y=y1, x=x1, t=t)
    checks["growth_y"]["y_ref"] = y_ref

    passed = all(c["violation"] <= tol for c in checks.values())
    return ValidationReport(passed=passed, tol=tol, checks=checks)
