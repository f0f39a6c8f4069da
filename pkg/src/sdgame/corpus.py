"""Worked examples with closed forms, plus the Epstein-Zin generator family.

``ex51`` has the classical solution ``W = x^2 / 2`` with optimal pair
``(0, 0)``; ``ex52`` has a z-dependent generator and the kinked solution
``W = -exp(T - t) |x|``; ``ex53`` is an upper game for an investor with
Epstein-Zin utility facing market friction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import Abs, Add, Const, EpsteinZin, Exp, Expr, Mul, Neg, Pow, Var, as_expr
from .errors import ConfigError, DomainError, RegimeError
from .problem import LOWER, UPPER, ControlSet, ProblemSpec

EXAMPLES = ("ex51", "ex52", "ex53")

# default state windows (x_lo, x_hi, N_x) used by the CLI's "default" grid
DEFAULT_GRIDS = {
    "ex51": (-2.0, 2.0, 401),
    "ex52": (-2.0, 2.0, 401),
    "ex53": (0.0, 8.0, 161),
}


@dataclass(frozen=True)
class EpsteinZinParams:
    """Preference parameters and consumption bounds ``c in [M, N]``."""

    rho: float = 0.1
    vartheta: float = 2.0
    varsigma: float = 2.0
    M: float = 0.1
    N: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise RegimeError("rho must be positive")
        for name in ("vartheta", "varsigma"):
            val = getattr(self, name)
            if not val > 0:
                raise RegimeError(f"{name} must be positive, got {val}")
            if val == 1:
                raise RegimeError(f"{name} = 1 is excluded (the aggregator degenerates)")
        if not (self.N > self.M >= 0):
            raise RegimeError(f"consumption bounds need N > M >= 0, got M={self.M}, N={self.N}")
        regime = self.regime
        if regime is None:
            raise RegimeError(
                f"mixed regime vartheta={self.vartheta}, varsigma={self.varsigma}: admissible "
                "are (i) vartheta > 1 and varsigma > 1, or (ii) vartheta < 1 and varsigma < 1")
        if regime == "ii" and self.M == 0:
            raise RegimeError("regime (ii) needs M > 0: with M = 0 the generator is not "
                              "continuous in consumption")

    @property
    def regime(self) -> str | None:
        if self.vartheta > 1 and self.varsigma > 1:
            return "i"
        if self.vartheta < 1 and self.varsigma < 1:
            return "ii"
        return None

    @property
    def beta(self) -> float:
        return 1.0 - 1.0 / self.varsigma

    @property
    def k(self) -> float:
        return self.rho / self.beta

    @property
    def power(self) -> float:
        """Exponent of ``|Y|`` in the non-linear part; above one in both regimes."""
        return 1.0 - self.beta / (1.0 - self.vartheta)

    @property
    def sign(self) -> float:
        """Sign of admissible utility levels ``Y``."""
        return math.copysign(1.0, 1.0 - self.vartheta)

    @property
    def theta(self) -> float:
        """One-sided Lipschitz constant: the non-linear part is decreasing in ``Y``."""
        return -self.k * (1.0 - self.vartheta)

    @property
    def eta(self) -> float:
        c_max = max(self.M ** self.beta if self.M > 0 else 0.0, self.N ** self.beta)
        return abs(self.k) * c_max * abs(1.0 - self.vartheta) ** self.power \
            + abs(self.k * (1.0 - self.vartheta))

    def generator(self, c: Expr, y: Expr | None = None) -> EpsteinZin:
        return EpsteinZin(self.rho, self.vartheta, self.varsigma, as_expr(c),
                          y if y is not None else Var("y"))


def epstein_zin_g(params: EpsteinZinParams, c, Y):
    """Epstein-Zin aggregator; requires ``(1 - vartheta) Y > 0`` strictly."""
    c = np.asarray(c, dtype=float)
    Y = np.asarray(Y, dtype=float)
    base = (1.0 - params.vartheta) * Y
    if np.any(base <= 0):
        raise DomainError("Epstein-Zin generator needs (1 - vartheta) * Y > 0",
                          {"y": float(np.asarray(Y).flat[int(np.argmax(base <= 0))])})
    if np.any(c < 0):
        raise DomainError("consumption must be non-negative")
    inner = (c / base ** (1.0 / (1.0 - params.vartheta))) ** params.beta
    out = params.k * base * (inner - 1.0)
    return float(out) if out.ndim == 0 else out


def _market(value) -> Expr:
    """Market coefficient given as a number, an expression or its config form."""
    expr = as_expr(value)
    if any(v not in ("t",) for v in expr.variables()):
        raise ConfigError("market coefficients may depend on t only")
    return expr


def _ex51(T=1.0, points=21, side=LOWER):
    u, v, x = Var("u"), Var("v"), Var("x")
    upv = Add((u, v))
    return ProblemSpec(
        drift=upv,
        diffusion=v,
        generator=Add((Neg(Mul((upv, x))), Neg(u), Neg(v))),
        terminal=Mul((Const(0.5), Pow(x, 2))),
        T=float(T), U=ControlSet.box((0.0, 1.0), points=points),
        V=ControlSet.box((-1.0, 0.0), points=points),
        theta=0.0, eta=1.0, p=1.0, lip_C=4.0, side=side, name="ex51",
    )


def _ex52(T=1.0, points=21, side=LOWER):
    u, v, x, z = Var("u"), Var("v"), Var("x"), Var("z")
    return ProblemSpec(
        drift=Add((x, Mul((x, v)), Mul((x, u, v)))),
        diffusion=Mul((v, x)),
        generator=Add((Neg(Mul((Add((u, v)), z))), Neg(u))),
        terminal=Neg(Abs(x)),
        T=float(T), U=ControlSet.box((0.0, 1.0), points=points),
        V=ControlSet.box((-1.0, 0.0), points=points),
        theta=0.0, eta=1.0, p=1.0, lip_C=1.0, side=side, name="ex52",
    )


def _ex53(T=1.0, points=5, side=UPPER, rho=0.1, vartheta=2.0, varsigma=2.0, M=0.1, N=1.0,
          r=0.03, b=0.08, vol=0.2, x_max=8.0):
    ez = EpsteinZinParams(rho, vartheta, varsigma, M, N)
    r, b, vol = _market(r), _market(b), _market(vol)
    x = Var("x")
    u1, c = Var("u0"), Var("u1")          # control u = (stock fraction, consumption)
    v0, v1 = Var("v0"), Var("v1")         # friction factors on bond and stock
    bond = Mul((v0, Add((Const(1.0), Neg(u1))), r))
    stock = Mul((v1, u1, b))
    drift = Add((Mul((Add((bond, stock)), x)), Neg(c)))
    diffusion = Mul((vol, v1, u1, x))
    # terminal utility: sign-definite and Lipschitz on x >= 0
    terminal = Mul((Const(ez.sign), Add((Const(1.0), Exp(Neg(x))))))
    return ProblemSpec(
        drift=drift, diffusion=diffusion, generator=ez.generator(c), terminal=terminal,
        T=float(T),
        U=ControlSet.box((-1.0, 1.0), (float(M), float(N)), points=points),
        V=ControlSet.box((0.0, 1.0), (0.0, 1.0), points=points),
        theta=ez.theta, eta=ez.eta, p=ez.power, lip_C=1.0, side=side, name="ex53",
        sample_box=(0.0, float(x_max)),
    )


_BUILDERS = {"ex51": _ex51, "ex52": _ex52, "ex53": _ex53}


def build_example(example_id: str, **params) -> ProblemSpec:
    """Problem data for a corpus example; ``params`` override the defaults.

    Raises :class:`RegimeError` for inadmissible Epstein-Zin parameters.
    """
    try:
        builder = _BUILDERS[example_id]
    except KeyError:
        raise ConfigError(f"unknown example {example_id!r}; choose from {EXAMPLES}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {example_id}: {exc}") from None


def analytic_solution(example_id: str, t, x, T: float = 1.0):
    """Closed-form value where one is known, ``None`` otherwise."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if example_id == "ex51":
        out = 0.5 * x * x + 0.0 * t
    elif example_id == "ex52":
        out = -np.exp(T - t) * np.abs(x)
    elif example_id in EXAMPLES:
        return None
    else:
        raise ConfigError(f"unknown example {example_id!r}")
    return float(out) if out.ndim == 0 else out


def analytic_for(spec: ProblemSpec):
    """Vectorized ``(t, x) -> W`` for a corpus problem, or ``None``."""
    if spec.name not in ("ex51", "ex52"):
        return None
    return lambda t, x: analytic_solution(spec.name, t, x, spec.T)
