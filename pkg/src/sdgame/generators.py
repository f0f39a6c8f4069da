"""Generator transforms: mollification in ``y`` and truncation at ``y = 0``.

``Mollified`` convolves a generator in ``y`` with the scaled standard bump

    zeta_m(y) = m c exp(-1 / (1 - (m y)^2))   for |m y| < 1,

discretized by Gauss-Legendre quadrature on its support.  ``Truncated``
replaces ``g(., 0, .)`` by its clamp to ``[-k, k]``.  Both are coefficient
expressions, so they serialize, evaluate and feed the solver like any other
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .coefficients import Add, Clamp, Const, Expr, Mul, Structure, clamp_level
from .errors import ConfigError, DomainError
from .hamiltonian import hz_tensor, reduce_lower, reduce_upper
from .problem import LOWER, ControlSet, GridSpec, ProblemSpec


@dataclass(frozen=True)
class TransformSpec:
    """Mollification index ``m``, truncation level ``k`` and quadrature size."""

    m: int = 1
    k: int = 1
    quadrature: int = 64

    def __post_init__(self):
        for name in ("m", "k"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val}")
        if int(self.quadrature) != self.quadrature or self.quadrature < 8:
            raise ConfigError("quadrature needs at least 8 nodes")
        if self.quadrature % 2:
            raise ConfigError("quadrature node count must be even (two symmetric panels)")


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def normalizing_constant() -> float:
    """``c`` with ``int zeta_1 = 1``, by adaptive quadrature."""
    val, _ = integrate.quad(lambda s: float(_bump(s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 1.0 / val


def mollifier_eval(m: int, y) -> np.ndarray:
    """``zeta_m(y)``; zero outside ``(-1/m, 1/m)``."""
    if m < 1:
        raise ConfigError("mollification index must be >= 1")
    y = np.asarray(y, dtype=float)
    return m * normalizing_constant() * _bump(m * np.abs(y))


@lru_cache(maxsize=None)
def mollifier_quadrature(m: int, nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric nodes and normalized weights for ``int zeta_m(s) f(s) ds``.

    Two Gauss-Legendre panels on ``[-1/m, 0]`` and ``[0, 1/m]`` (the bump is
    flat at both ends of each panel); the negative panel mirrors the positive
    one so odd moments vanish up to rounding.  Weights are renormalized to sum
    to exactly one.
    """
    TransformSpec(m=m, quadrature=nodes)
    half = nodes // 2
    s, w = np.polynomial.legendre.leggauss(half)
    pos = 0.5 * (s + 1.0) / m
    wpos = 0.5 * w / m * mollifier_eval(m, pos)
    n = np.concatenate([-pos[::-1], pos])
    wt = np.concatenate([wpos[::-1], wpos])
    wt = wt / wt.sum()
    n.setflags(write=False)
    wt.setflags(write=False)
    return n, wt


def lambda_k(x, k: float):
    """Radial cutoff ``inf(k, |x|) x / |x|`` with ``Lambda_k(0) = 0``."""
    return clamp_level(x, k)


@dataclass(frozen=True, repr=False)
class Mollified(Expr):
    """``g_m(y) = sum_j w_j g(y - s_j)``, a quadrature of ``zeta_m * g``."""

    inner: Expr
    m: int
    nodes: int = 64

    def __post_init__(self):
        TransformSpec(m=self.m, quadrature=self.nodes)

    @property
    def quadrature(self):
        return mollifier_quadrature(self.m, self.nodes)

    def evaluate(self, env):
        if not self.inner.depends_on("y"):
            return self.inner.evaluate(env)
        y = np.asarray(env["y"], dtype=float)
        acc = None
        sub = dict(env)
        for s, w in zip(*self.quadrature):
            sub["y"] = y - s
            term = w * self.inner.evaluate(sub)
            acc = term if acc is None else acc + term
        if not np.all(np.isfinite(acc)):
            raise DomainError("non-finite generator inside mollifier quadrature")
        return acc

    def children(self):
        return (self.inner,)

    def to_config(self):
        return {"mollify": {"m": int(self.m), "of": self.inner.to_config(),
                            "nodes": int(self.nodes)}}

    def y_domain(self):
        lo, hi = self.inner.y_domain()
        r = 1.0 / self.m
        return lo + r, hi - r

    def structure(self):
        s = self.inner.structure()
        if s is None or not s.y_dependent:
            return s
        n, w = self.quadrature
        mean = float(np.dot(w, n))
        g0 = s.g0
        if s.gy is not None and mean != 0.0:
            shift = Mul((Const(-mean), s.gy))
            g0 = shift if g0 is None else Add((g0, shift))
        phi = s.phi.convolved(tuple(n), tuple(w)) if s.phi is not None else None
        return Structure(g0=g0, gz=s.gz, gy=s.gy, gp=s.gp, phi=phi)


@dataclass(frozen=True, repr=False)
class Truncated(Expr):
    """``g(y) - g(0) + Lambda_k(g(0))``."""

    inner: Expr
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError("truncation level must be positive")

    def evaluate(self, env):
        g = self.inner.evaluate(env)
        g_at_0 = self.inner.evaluate({**env, "y": np.zeros(np.shape(env.get("y", 0.0)))})
        return g - g_at_0 + lambda_k(g_at_0, self.k)

    def children(self):
        return (self.inner,)

    def to_config(self):
        return {"truncate": {"k": float(self.k), "of": self.inner.to_config()}}

    def structure(self):
        s = self.inner.structure()
        if s is None or s.z_dependent:
            return None
        phi0 = 0.0
        if s.phi is not None:
            try:
                phi0 = float(s.phi(0.0))
            except DomainError:
                return None
        base = s.g0 if s.g0 is not None else Const(0.0)
        if s.gp is not None and phi0 != 0.0:
            base = Add((base, Mul((Const(phi0), s.gp))))
            g0 = Add((Clamp(base, self.k), Mul((Const(-phi0), s.gp))))
        else:
            g0 = Clamp(base, self.k)
        return Structure(g0=g0, gy=s.gy, gp=s.gp, phi=s.phi)


def mollify(spec: ProblemSpec | Expr, m: int, nodes: int = 64) -> Mollified:
    """Mollified generator ``g_m`` of a problem (or of a bare generator)."""
    g = spec.generator if isinstance(spec, ProblemSpec) else spec
    return Mollified(g, int(m), int(nodes))


def truncate(spec: ProblemSpec | Expr, k: float) -> Truncated:
    """Truncated generator of a problem (or of a bare generator)."""
    g = spec.generator if isinstance(spec, ProblemSpec) else spec
    return Truncated(g, float(k))


# --------------------------------------------------------------------------
# uniform distances on compacts


@dataclass(frozen=True)
class Compact:
    """Box in ``(t, x, y, z)`` times the full control meshes."""

    t: tuple[float, float]
    x: tuple[float, float]
    y: tuple[float, float]
    U: ControlSet
    V: ControlSet
    z: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("t", "x", "y"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"compact needs a non-degenerate {name}-range")

    @classmethod
    def for_spec(cls, spec: ProblemSpec, y: tuple[float, float],
                 x: tuple[float, float] | None = None, z=(0.0, 0.0)) -> "Compact":
        return cls((0.0, spec.T), tuple(x or spec.sample_box), tuple(y), spec.U, spec.V,
                   tuple(z))

    def sample(self, n: int) -> dict[str, np.ndarray]:
        """Deterministic Halton points in the box."""
        ranges = [self.t, self.x, self.y]
        if self.z[0] < self.z[1]:
            ranges.append(self.z)
        pts = qmc.Halton(d=len(ranges), scramble=False).random(n)
        lo = np.array([r[0] for r in ranges])
        hi = np.array([r[1] for r in ranges])
        pts = qmc.scale(pts, lo, hi)
        out = {"t": pts[:, 0], "x": pts[:, 1], "y": pts[:, 2]}
        out["z"] = pts[:, 3] if len(ranges) == 4 else np.full(n, self.z[0])
        return out


def _as_env_fn(g):
    if isinstance(g, Expr):
        return g.evaluate
    if isinstance(g, ProblemSpec):
        return g.generator.evaluate
    return g


def sup_distance_on_compact(g1, g2, compact: Compact, samples: int = 4096,
                            chunk: int = 256) -> float:
    """``max |g1 - g2|`` over Halton samples times every control pair.

    ``g1``/``g2`` are generator expressions, problems, or callables taking an
    environment mapping.
    """
    if samples < 1000:
        raise ConfigError("sup_distance_on_compact needs at least 1000 samples")
    f1, f2 = _as_env_fn(g1), _as_env_fn(g2)
    pts = compact.sample(samples)
    u = compact.U.points[None, :, None, :]
    v = compact.V.points[None, None, :, :]
    worst = 0.0
    for s in range(0, samples, chunk):
        env = {k: a[s:s + chunk, None, None] for k, a in pts.items()}
        env.update(u=u, v=v)
        d = np.abs(np.asarray(f1(env)) - np.asarray(f2(env)))
        if not np.all(np.isfinite(d)):
            raise DomainError("non-finite generator value on the compact")
        worst = max(worst, float(np.max(d)))
    return worst


def max_abs_at_zero(g, compact: Compact, samples: int = 4096) -> float:
    """``max |g(., 0, .)|`` over the compact's ``(t, x, z)`` samples."""
    f = _as_env_fn(g)
    pts = compact.sample(samples)
    env = {"t": pts["t"][:, None, None], "x": pts["x"][:, None, None],
           "y": np.zeros((samples, 1, 1)), "z": pts["z"][:, None, None],
           "u": compact.U.points[None, :, None, :], "v": compact.V.points[None, None, :, :]}
    return float(np.max(np.abs(f(env))))


def hamiltonian_distance(spec: ProblemSpec, g_alt: Expr, compact: Compact,
                         samples: int = 1024, side: str = LOWER,
                         p_range=(-1.0, 1.0), A_range=(-1.0, 1.0)) -> dict:
    """Compare Isaacs Hamiltonians under ``g`` and ``g_alt`` at sampled queries.

    Returns the largest Hamiltonian gap together with the largest slack of the
    bound ``|H[g_alt] - H[g]| <= sup_{u,v} |g_alt - g|`` (negative slack means
    the bound held with room to spare).
    """
    pts = qmc.scale(qmc.Halton(d=5, scramble=False).random(samples),
                    [compact.t[0], compact.x[0], compact.y[0], p_range[0], A_range[0]],
                    [compact.t[1], compact.x[1], compact.y[1], p_range[1], A_range[1]])
    t, x, y, p, A = pts.T
    alt = spec.with_generator(g_alt)
    M0 = hz_tensor(spec, t, x, y, p, A)
    M1 = hz_tensor(alt, t, x, y, p, A)
    red = reduce_lower if side == LOWER else reduce_upper
    gap = np.abs(red(M1)[0] - red(M0)[0])
    pair_sup = np.max(np.abs(M1 - M0), axis=(-2, -1))
    return {"max_gap": float(gap.max()), "max_slack": float(np.max(gap - pair_sup))}


def field_distance(spec: ProblemSpec, g_alt: Expr, grid: GridSpec, margin: float = 0.3,
                   reference=None, **solve_kw) -> float:
    """Interior max-norm distance between the value fields under ``g`` and ``g_alt``."""
    from .solver import solve

    base = reference if reference is not None else solve(spec, grid, **solve_kw)
    alt = solve(spec.with_generator(g_alt), grid, **solve_kw)
    mask = grid.interior_mask(margin)
    return float(np.max(np.abs(alt.values[:, mask] - base.values[:, mask])))


def transform_study(spec: ProblemSpec, compact: Compact, ms=(2, 4, 8, 16, 32),
                    ks=(), samples: int = 4096, grid: GridSpec | None = None,
                    quadrature: int = 64, **solve_kw) -> list[dict]:
    """Rows ``(kind, level, sup_distance, hamiltonian_distance, field_distance)``."""
    from .solver import solve

    reference = solve(spec, grid, **solve_kw) if grid is not None else None
    rows = []
    plan = [("mollify", m, mollify(spec, m, quadrature)) for m in ms]
    plan += [("truncate", k, truncate(spec, k)) for k in ks]
    for kind, level, g_alt in plan:
        row = {"kind": kind, "level": level,
               "sup_distance": sup_distance_on_compact(spec.generator, g_alt, compact,
                                                       samples),
               "hamiltonian_distance": hamiltonian_distance(
                   spec, g_alt, compact, side=spec.side)["max_gap"]}
        row["field_distance"] = (field_distance(spec, g_alt, grid, reference=reference,
                                                **solve_kw)
                                 if grid is not None else math.nan)
        rows.append(row)
    return rows
