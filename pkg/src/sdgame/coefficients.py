"""Declarative coefficient library.

Coefficients (drift, diffusion, generator, terminal) are small expression
trees over the variables ``t, x, y, z`` and control components ``u0, u1, ...``
and ``v0, v1, ...`` (``u``/``v`` alias the first component).  Trees evaluate
vectorized on numpy arrays, serialize to a JSON-compatible form, and can
report a *structure*: the decomposition

    g = g0 + gz * z + gy * y + gp * phi(y)

with ``g0, gz, gy, gp`` free of ``(y, z)`` and ``phi`` a (possibly mollified)
signed power.  The compiled solver kernel only understands that form; any
other generator goes through the generic numpy path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DomainError

STATE_VARS = ("t", "x", "y", "z")


def _is_control_var(name: str) -> bool:
    if name in ("u", "v"):
        return True
    return len(name) >= 2 and name[0] in "uv" and name[1:].isdigit()


def _control_index(name: str) -> tuple[str, int]:
    return (name[0], 0) if len(name) == 1 else (name[0], int(name[1:]))


class Expr:
    """Base class of coefficient expressions."""

    def evaluate(self, env: Mapping[str, Any]) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, **env) -> np.ndarray:
        return self.evaluate(env)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def variables(self) -> set[str]:
        out: set[str] = set()
        for c in self.children():
            out |= c.variables()
        return out

    def depends_on(self, *names: str) -> bool:
        vs = self.variables()
        return any(n in vs for n in names)

    def is_pure(self) -> bool:
        """True when free of ``y`` and ``z``."""
        return not self.depends_on("y", "z")

    def to_config(self) -> Any:
        raise NotImplementedError

    def structure(self) -> "Structure | None":
        if self.is_pure():
            return Structure(g0=self)
        return None

    def y_domain(self) -> tuple[float, float]:
        lo, hi = -math.inf, math.inf
        for c in self.children():
            clo, chi = c.y_domain()
            lo, hi = max(lo, clo), min(hi, chi)
        return lo, hi

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_config()!r})"


def _env_value(env: Mapping[str, Any], name: str):
    if _is_control_var(name):
        kind, idx = _control_index(name)
        arr = np.asarray(env[kind], dtype=float)
        return arr[..., idx]
    return np.asarray(env[name], dtype=float)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def evaluate(self, env):
        return np.asarray(self.value, dtype=float)

    def to_config(self):
        return float(self.value)


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __post_init__(self):
        if self.name not in STATE_VARS and not _is_control_var(self.name):
            raise ConfigError(f"unknown variable {self.name!r}")

    def evaluate(self, env):
        return _env_value(env, self.name)

    def variables(self):
        return {self.name}

    def to_config(self):
        return self.name

    def structure(self):
        if self.name == "y":
            return Structure(gy=Const(1.0))
        if self.name == "z":
            return Structure(gz=Const(1.0))
        return Structure(g0=self)


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple[Expr, ...]

    def evaluate(self, env):
        out = self.terms[0].evaluate(env)
        for t in self.terms[1:]:
            out = out + t.evaluate(env)
        return out

    def children(self):
        return self.terms

    def to_config(self):
        return {"add": [t.to_config() for t in self.terms]}

    def structure(self):
        acc = Structure()
        for t in self.terms:
            s = t.structure()
            if s is None:
                return None
            acc = acc.plus(s)
            if acc is None:
                return None
        return acc


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple[Expr, ...]

    def evaluate(self, env):
        out = self.factors[0].evaluate(env)
        for f in self.factors[1:]:
            out = out * f.evaluate(env)
        return out

    def children(self):
        return self.factors

    def to_config(self):
        return {"mul": [f.to_config() for f in self.factors]}

    def structure(self):
        impure = [f for f in self.factors if not f.is_pure()]
        if not impure:
            return Structure(g0=self)
        if len(impure) > 1:
            return None
        s = impure[0].structure()
        if s is None:
            return None
        pure = [f for f in self.factors if f.is_pure()]
        return s.scaled(pure)


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def children(self):
        return (self.arg,)

    def to_config(self):
        return {"neg": self.arg.to_config()}

    def structure(self):
        s = self.arg.structure()
        return None if s is None else s.scaled([Const(-1.0)])


@dataclass(frozen=True, repr=False)
class Abs(Expr):
    arg: Expr

    def evaluate(self, env):
        return np.abs(self.arg.evaluate(env))

    def children(self):
        return (self.arg,)

    def to_config(self):
        return {"abs": self.arg.to_config()}


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: float

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if float(self.exponent).is_integer():
            return b ** int(self.exponent)
        if np.any(b < 0):
            raise DomainError("negative base in fractional power")
        return b ** self.exponent

    def children(self):
        return (self.base,)

    def to_config(self):
        return {"pow": [self.base.to_config(), float(self.exponent)]}


@dataclass(frozen=True, repr=False)
class Exp(Expr):
    arg: Expr

    def evaluate(self, env):
        return np.exp(self.arg.evaluate(env))

    def children(self):
        return (self.arg,)

    def to_config(self):
        return {"exp": self.arg.to_config()}


@dataclass(frozen=True, repr=False)
class Log(Expr):
    arg: Expr

    def evaluate(self, env):
        a = self.arg.evaluate(env)
        if np.any(a <= 0):
            raise DomainError("non-positive argument of log")
        return np.log(a)

    def children(self):
        return (self.arg,)

    def to_config(self):
        return {"log": self.arg.to_config()}


@dataclass(frozen=True, repr=False)
class Extremum(Expr):
    kind: str  # "min" | "max"
    args: tuple[Expr, ...]

    def evaluate(self, env):
        fn = np.minimum if self.kind == "min" else np.maximum
        out = self.args[0].evaluate(env)
        for a in self.args[1:]:
            out = fn(out, a.evaluate(env))
        return out

    def children(self):
        return self.args

    def to_config(self):
        return {self.kind: [a.to_config() for a in self.args]}


def clamp_level(values, k: float):
    """Radial clamp ``inf(k, |x|) x / |x|`` with value 0 at the origin."""
    values = np.asarray(values, dtype=float)
    return np.clip(values, -k, k)


@dataclass(frozen=True, repr=False)
class Clamp(Expr):
    arg: Expr
    k: float

    def evaluate(self, env):
        return clamp_level(self.arg.evaluate(env), self.k)

    def children(self):
        return (self.arg,)

    def to_config(self):
        return {"clamp": {"k": float(self.k), "of": self.arg.to_config()}}


# --------------------------------------------------------------------------
# Epstein-Zin aggregator


@dataclass(frozen=True)
class PowerPhi:
    """``phi(y) = sum_j w_j * (s * (y - n_j))**e`` with zero at a zero base."""

    sign: float
    exponent: float
    nodes: tuple[float, ...] = (0.0,)
    weights: tuple[float, ...] = (1.0,)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for n, w in zip(self.nodes, self.weights):
            base = self.sign * (y - n)
            if np.any(base < 0):
                raise DomainError("Epstein-Zin power evaluated outside its domain")
            out = out + w * np.power(base, self.exponent)
        return out

    def convolved(self, nodes, weights) -> "PowerPhi":
        # phi_m(y) = sum_k w_k phi(y - n_k)
        new_n, new_w = [], []
        for n1, w1 in zip(self.nodes, self.weights):
            for n2, w2 in zip(nodes, weights):
                new_n.append(n1 + n2)
                new_w.append(w1 * w2)
        return PowerPhi(self.sign, self.exponent, tuple(new_n), tuple(new_w))

    def key(self):
        return (self.sign, self.exponent, self.nodes, self.weights)


@dataclass(frozen=True, repr=False)
class EpsteinZin(Expr):
    """Epstein-Zin generator ``k (1-a) Y [(c / ((1-a) Y)^(1/(1-a)))^(1-1/s) - 1]``.

    ``a`` is the relative risk aversion and ``s`` the elasticity of
    intertemporal substitution; ``k = rho / (1 - 1/s)``.  At ``(1-a) Y = 0``
    the continuous limit 0 is returned (the exponent on ``(1-a)Y`` exceeds one
    in both admissible regimes).
    """

    rho: float
    vartheta: float
    varsigma: float
    c: Expr
    y: Expr = field(default_factory=lambda: Var("y"))

    @property
    def beta(self) -> float:
        return 1.0 - 1.0 / self.varsigma

    @property
    def k(self) -> float:
        return self.rho / self.beta

    @property
    def power(self) -> float:
        return 1.0 - self.beta / (1.0 - self.vartheta)

    @property
    def sign(self) -> float:
        return math.copysign(1.0, 1.0 - self.vartheta)

    def evaluate(self, env):
        c = self.c.evaluate(env)
        y = self.y.evaluate(env)
        one_m = 1.0 - self.vartheta
        base = one_m * y
        if np.any(base < 0):
            raise DomainError("Epstein-Zin generator requires (1 - vartheta) * Y >= 0")
        if np.any(c < 0):
            raise DomainError("negative consumption")
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.power(c, self.beta) * np.power(abs(one_m), self.power) \
                * np.power(self.sign * y, self.power)
        scaled = np.where(base == 0, 0.0, scaled)
        return self.k * scaled - self.k * one_m * y

    def children(self):
        return (self.c, self.y)

    def to_config(self):
        return {"epstein_zin": {
            "rho": float(self.rho), "vartheta": float(self.vartheta),
            "varsigma": float(self.varsigma), "c": self.c.to_config(),
            "y": self.y.to_config(),
        }}

    def y_domain(self):
        lo, hi = (0.0, math.inf) if self.sign > 0 else (-math.inf, 0.0)
        clo, chi = Expr.y_domain(self)
        return max(lo, clo), min(hi, chi)

    def structure(self):
        if not (isinstance(self.y, Var) and self.y.name == "y") or not self.c.is_pure():
            return None
        one_m = 1.0 - self.vartheta
        gp = Mul((Const(self.k * abs(one_m) ** self.power), Pow(self.c, self.beta)))
        return Structure(gy=Const(-self.k * one_m), gp=gp,
                         phi=PowerPhi(self.sign, self.power))


# --------------------------------------------------------------------------
# structure


@dataclass(frozen=True)
class Structure:
    """``g0 + gz*z + gy*y + gp*phi(y)`` with pure coefficient expressions."""

    g0: Expr | None = None
    gz: Expr | None = None
    gy: Expr | None = None
    gp: Expr | None = None
    phi: PowerPhi | None = None

    def plus(self, other: "Structure") -> "Structure | None":
        if self.phi is not None and other.phi is not None \
                and self.phi.key() != other.phi.key():
            return None

        def add(a, b):
            if a is None:
                return b
            if b is None:
                return a
            return Add((a, b))

        return Structure(add(self.g0, other.g0), add(self.gz, other.gz),
                         add(self.gy, other.gy), add(self.gp, other.gp),
                         self.phi or other.phi)

    def scaled(self, factors) -> "Structure":
        if not factors:
            return self

        def sc(a):
            return None if a is None else Mul((*factors, a))

        return Structure(sc(self.g0), sc(self.gz), sc(self.gy), sc(self.gp), self.phi)

    @property
    def y_dependent(self) -> bool:
        return self.gy is not None or self.gp is not None

    @property
    def z_dependent(self) -> bool:
        return self.gz is not None


# --------------------------------------------------------------------------
# parsing


def affine(const: float = 0.0, **coeffs: float) -> Expr:
    terms: list[Expr] = []
    if const:
        terms.append(Const(const))
    for name, a in coeffs.items():
        if a:
            terms.append(Mul((Const(a), Var(name))) if a != 1 else Var(name))
    if not terms:
        return Const(0.0)
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def _expect(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def parse_expr(node: Any) -> Expr:
    """Build an expression from its JSON-compatible description."""
    from .generators import Mollified, Truncated

    if isinstance(node, bool):
        raise ConfigError("booleans are not coefficient expressions")
    if isinstance(node, (int, float)):
        return Const(float(node))
    if isinstance(node, str):
        return Var(node)
    _expect(isinstance(node, dict) and len(node) == 1,
            f"expression must be a number, a variable name or a one-key object: {node!r}")
    (op, arg), = node.items()
    if op in ("add", "mul", "min", "max"):
        _expect(isinstance(arg, list) and arg, f"{op} expects a non-empty list")
        parts = tuple(parse_expr(a) for a in arg)
        if op == "add":
            return Add(parts)
        if op == "mul":
            return Mul(parts)
        return Extremum(op, parts)
    if op == "sub":
        _expect(isinstance(arg, list) and len(arg) == 2, "sub expects [a, b]")
        return Add((parse_expr(arg[0]), Neg(parse_expr(arg[1]))))
    if op == "neg":
        return Neg(parse_expr(arg))
    if op == "abs":
        return Abs(parse_expr(arg))
    if op == "exp":
        return Exp(parse_expr(arg))
    if op == "log":
        return Log(parse_expr(arg))
    if op == "pow":
        _expect(isinstance(arg, list) and len(arg) == 2, "pow expects [base, exponent]")
        return Pow(parse_expr(arg[0]), float(arg[1]))
    if op == "affine":
        _expect(isinstance(arg, dict), "affine expects an object of coefficients")
        arg = dict(arg)
        const = float(arg.pop("const", 0.0))
        for name in arg:
            Var(name)
        return affine(const, **{k: float(v) for k, v in arg.items()})
    if op == "poly":
        _expect(isinstance(arg, dict) and set(arg) == {"var", "coeffs"},
                "poly expects {var, coeffs}")
        var = Var(arg["var"])
        terms = []
        for i, c in enumerate(arg["coeffs"]):
            if c == 0:
                continue
            terms.append(Const(float(c)) if i == 0 else Mul((Const(float(c)), Pow(var, i))))
        return Add(tuple(terms)) if terms else Const(0.0)
    if op == "clamp":
        return Clamp(parse_expr(arg["of"]), float(arg["k"]))
    if op == "epstein_zin":
        need = {"rho", "vartheta", "varsigma", "c"}
        _expect(isinstance(arg, dict) and need <= set(arg) <= need | {"y"},
                "epstein_zin expects rho, vartheta, varsigma, c[, y]")
        return EpsteinZin(float(arg["rho"]), float(arg["vartheta"]), float(arg["varsigma"]),
                          parse_expr(arg["c"]), parse_expr(arg.get("y", "y")))
    if op == "mollify":
        _expect(isinstance(arg, dict) and {"m", "of"} <= set(arg) <= {"m", "of", "nodes"},
                "mollify expects {m, of[, nodes]}")
        return Mollified(parse_expr(arg["of"]), int(arg["m"]), int(arg.get("nodes", 64)))
    if op == "truncate":
        _expect(isinstance(arg, dict) and set(arg) == {"k", "of"}, "truncate expects {k, of}")
        return Truncated(parse_expr(arg["of"]), float(arg["k"]))
    raise ConfigError(f"unknown coefficient operator {op!r}")


def as_expr(obj: Any) -> Expr:
    return obj if isinstance(obj, Expr) else parse_expr(obj)
