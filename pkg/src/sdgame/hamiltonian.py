"""Generalized Hamiltonian and the lower/upper Isaacs Hamiltonians.

All optimization is exhaustive search over the control meshes; ties go to
the lowest mesh index (``numpy.argmin``/``argmax`` semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .problem import LOWER, ProblemSpec


@dataclass(frozen=True)
class HamiltonianQuery:
    """Argument ``(t, x, y, p, A)`` of the Hamiltonians (one-dimensional state)."""

    t: float
    x: float
    y: float
    p: float
    A: float

    def __post_init__(self):
        for name in ("t", "x", "y", "p", "A"):
            val = getattr(self, name)
            if np.ndim(val) != 0:
                raise ValueError(f"{name} must be a scalar in the one-dimensional setting")
            if not math.isfinite(float(val)):
                raise ValueError(f"{name} must be finite, got {val}")


class SaddleValue(NamedTuple):
    value: float
    star: np.ndarray          # optimizing control of the leading player
    response: np.ndarray      # follower's best response to every leader mesh point
    star_index: int
    response_index: np.ndarray


def hz_tensor(spec: ProblemSpec, t, x, y, p, A) -> np.ndarray:
    """Evaluate ``1/2 sigma^2 A + p b + g(t, x, y, p sigma, u, v)`` on the mesh.

    ``t, x, y, p, A`` broadcast together to a node shape ``S``; the result has
    shape ``S + (|U|, |V|)``.
    """
    Up, Vp = spec.U.points, spec.V.points
    t, x, y, p, A = (np.asarray(a, dtype=float)[..., None, None] for a in (t, x, y, p, A))
    u = Up[:, None, :]
    v = Vp[None, :, :]
    b = spec.b(t, x, u, v)
    s = spec.sigma(t, x, u, v)
    g = spec.g(t, x, y, p * s, u, v)
    out = 0.5 * s * s * A + p * b + g
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        node = tuple(bad[:-2])
        where = {k: float(np.broadcast_to(a, out.shape)[tuple(bad)]) for k, a in
                 (("t", t), ("x", x), ("y", y))}
        raise DomainError(f"non-finite Hamiltonian at node {node}", where)
    return out


def eval_hz(q: HamiltonianQuery, u, v, spec: ProblemSpec) -> float:
    """Generalized Hamiltonian at a single control pair."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    b = float(spec.b(q.t, q.x, u, v))
    s = float(spec.sigma(q.t, q.x, u, v))
    g = float(spec.g(q.t, q.x, q.y, q.p * s, u, v))
    out = 0.5 * s * s * q.A + q.p * b + g
    if not math.isfinite(out):
        raise DomainError("non-finite Hamiltonian", {"t": q.t, "x": q.x, "y": q.y})
    return out


def reduce_lower(M: np.ndarray):
    """sup over rows of inf over columns; returns value, argmax row, argmin per row."""
    resp = np.argmin(M, axis=-1)
    inner = np.take_along_axis(M, resp[..., None], axis=-1)[..., 0]
    star = np.argmax(inner, axis=-1)
    value = np.take_along_axis(inner, star[..., None], axis=-1)[..., 0]
    return value, star, resp


def reduce_upper(M: np.ndarray):
    """inf over columns of sup over rows; returns value, argmin column, argmax per column."""
    resp = np.argmax(M, axis=-2)
    inner = np.take_along_axis(M, resp[..., None, :], axis=-2)[..., 0, :]
    star = np.argmin(inner, axis=-1)
    value = np.take_along_axis(inner, star[..., None], axis=-1)[..., 0]
    return value, star, resp


def lower_hamiltonian(q: HamiltonianQuery, spec: ProblemSpec) -> SaddleValue:
    """``H^-``: player I maximizes against player II's pointwise best response."""
    M = hz_tensor(spec, q.t, q.x, q.y, q.p, q.A)
    value, star, resp = reduce_lower(M)
    star = int(star)
    return SaddleValue(float(value), spec.U.points[star], spec.V.points[resp], star, resp)


def upper_hamiltonian(q: HamiltonianQuery, spec: ProblemSpec) -> SaddleValue:
    """``H^+``: player II minimizes against player I's pointwise best response."""
    M = hz_tensor(spec, q.t, q.x, q.y, q.p, q.A)
    value, star, resp = reduce_upper(M)
    star = int(star)
    return SaddleValue(float(value), spec.V.points[star], spec.U.points[resp], star, resp)


def hamiltonian(q: HamiltonianQuery, spec: ProblemSpec, side: str = LOWER) -> SaddleValue:
    return lower_hamiltonian(q, spec) if side == LOWER else upper_hamiltonian(q, spec)


def isaacs_gap(q: HamiltonianQuery, spec: ProblemSpec) -> float:
    """``H^+ - H^-``; non-negative on finite meshes up to rounding."""
    M = hz_tensor(spec, q.t, q.x, q.y, q.p, q.A)
    return float(reduce_upper(M)[0] - reduce_lower(M)[0])
