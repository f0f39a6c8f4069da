"""Monte-Carlo evaluation of the recursive cost functional.

Forward paths come from an Euler-Maruyama scheme driven by feedback
policies.  The backward sweep estimates conditional expectations by global
polynomial least squares in the (standardized) state and solves the
implicit-in-``y`` step per sample by fixed-point iteration.

Every path draws its Brownian increments from its own counter-based Philox
stream keyed by ``(seed, path index)``, so results do not depend on how
paths are chunked and paired comparisons share their noise exactly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalAbort, ValidationError
from .problem import BSDESolution, PathBundle, ProblemSpec, generator_y_range

log = logging.getLogger(__name__)

FP_TOL = 1e-12
FP_MAXIT = 200


def brownian_increments(seed: int, M: int, N: int, dt: float, start: int = 0) -> np.ndarray:
    """``(M, N)`` increments; row ``i`` comes from the stream keyed ``(seed, start + i)``."""
    out = np.empty((M, N))
    sd = np.sqrt(dt)
    for i in range(M):
        bitgen = np.random.Philox(key=np.array([seed, start + i], dtype=np.uint64))
        out[i] = np.random.Generator(bitgen).standard_normal(N)
    return out * sd


def simulate_paths(spec: ProblemSpec, policy, t0: float, x0: float, M: int, N: int,
                   seed: int = 0) -> PathBundle:
    """Euler-Maruyama paths of the controlled state.

    ``policy(t, x)`` maps a time and an array of states to control arrays
    ``(u, v)`` whose last axis is the control dimension.
    """
    if not t0 < spec.T:
        raise ValidationError("t0 must be before the horizon")
    if M < 1 or N < 1:
        raise ValidationError("need at least one path and one step")
    times = np.linspace(t0, spec.T, N + 1)
    dt = (spec.T - t0) / N
    dB = brownian_increments(seed, M, N, dt)
    x = np.empty((M, N + 1))
    x[:, 0] = x0
    u = np.empty((M, N, spec.U.dim))
    v = np.empty((M, N, spec.V.dim))
    for k in range(N):
        uk, vk = policy(times[k], x[:, k])
        u[:, k] = np.broadcast_to(uk, (M, spec.U.dim))
        v[:, k] = np.broadcast_to(vk, (M, spec.V.dim))
        b = spec.b(times[k], x[:, k], u[:, k], v[:, k])
        s = spec.sigma(times[k], x[:, k], u[:, k], v[:, k])
        x[:, k + 1] = x[:, k] + b * dt + s * dB[:, k]
        bad = ~np.isfinite(x[:, k + 1])
        if np.any(bad):
            raise NumericalAbort("non-finite state", {"path": int(np.argmax(bad)), "step": k + 1})
    for a in (times, x, u, v, dB):
        a.setflags(write=False)
    return PathBundle(t0=float(t0), x0=float(x0), M=int(M), times=times, states=x, u=u, v=v,
                      dB=dB, seed=int(seed))


class Regression:
    """Least-squares projection on polynomials of the standardized state."""

    def __init__(self, x: np.ndarray, degree: int):
        sd = float(np.std(x))
        if sd <= 1e-12 * (1.0 + abs(float(np.mean(x)))):
            degree = 0
            xs = np.zeros_like(x)
        else:
            xs = (x - np.mean(x)) / sd
        self.reduced = False
        while True:
            basis = np.vander(xs, degree + 1, increasing=True)
            rank = np.linalg.matrix_rank(basis)
            if rank == degree + 1 or degree == 0:
                break
            self.reduced = True
            degree -= 1
        if self.reduced:
            warnings.warn(f"regression basis rank deficient; degree reduced to {degree}",
                          RuntimeWarning, stacklevel=3)
        self.degree = degree
        self.basis = basis
        self._pinv = np.linalg.pinv(basis)

    def fit(self, target: np.ndarray) -> np.ndarray:
        return self.basis @ (self._pinv @ target)


def _implicit(spec, t, x, cond, z, u, v, dt, y_dep, explicit_ok):
    """Solve ``y = cond + dt * g(t, x, y, z, u, v)`` per sample."""
    if not y_dep:
        g = spec.g(t, x, cond, z, u, v)
        return cond + dt * g, g, 1
    y = cond.copy()
    for it in range(1, FP_MAXIT + 1):
        g = spec.g(t, x, y, z, u, v)
        ynew = cond + dt * g
        if not np.all(np.isfinite(ynew)):
            break
        if np.all(np.abs(ynew - y) <= FP_TOL * (1.0 + np.abs(ynew))):
            return ynew, spec.g(t, x, ynew, z, u, v), it
        y = ynew
    if explicit_ok:
        g = spec.g(t, x, cond, z, u, v)
        return cond + dt * g, g, -1
    raise NumericalAbort("implicit BSDE step did not converge", {"t": float(t)})


def solve_bsde(bundle: PathBundle, spec: ProblemSpec, basis_degree: int = 4) -> BSDESolution:
    """Backward regression sweep along ``bundle``.

    When the diffusion vanishes on every path the dynamics are deterministic
    per path, so the sweep integrates each path's backward equation directly
    (``Z = 0``).
    """
    if basis_degree < 1:
        raise ValidationError("basis_degree must be at least 1")
    M, N, dt = bundle.M, bundle.N, bundle.dt
    X, t = bundle.states, bundle.times
    Y = np.empty((M, N + 1))
    Z = np.zeros((M, N))
    Y[:, N] = spec.h(X[:, N])
    sig = np.stack([spec.sigma(t[k], X[:, k], bundle.u[:, k], bundle.v[:, k])
                    for k in range(N)], axis=1)
    pathwise = np.asarray(spec.h(X[:, N]), dtype=float).copy()
    y_dep = spec.y_dependent
    y_est = float(np.max(np.abs(Y[:, N])))
    explicit_ok = dt * spec.eta * max(1.0, y_est ** (spec.p - 1.0)) < 0.5
    degenerate = bool(np.all(sig == 0.0))
    reduced = False
    explicit_steps = 0
    iters = 0
    for k in range(N - 1, -1, -1):
        xk, uk, vk = X[:, k], bundle.u[:, k], bundle.v[:, k]
        if degenerate:
            cond = Y[:, k + 1]
        else:
            reg = Regression(xk, basis_degree)
            reduced |= reg.reduced
            cond = reg.fit(Y[:, k + 1])
            Z[:, k] = reg.fit(Y[:, k + 1] * bundle.dB[:, k] / dt)
        Y[:, k], g, it = _implicit(spec, t[k], xk, cond, Z[:, k], uk, vk, dt, y_dep,
                                   explicit_ok)
        if it < 0:
            explicit_steps += 1
        iters = max(iters, it)
        pathwise += dt * g
        if not np.all(np.isfinite(Y[:, k])):
            i = int(np.argmax(~np.isfinite(Y[:, k])))
            raise NumericalAbort("non-finite Y", {"path": i, "step": k})
    diag = {"degenerate_dynamics": degenerate, "degree_reduced": reduced,
            "explicit_steps": explicit_steps, "max_fixed_point_iterations": iters}
    for a in (Y, Z, pathwise):
        a.setflags(write=False)
    return BSDESolution(Y=Y, Z=Z, Y0=float(np.mean(Y[:, 0])), pathwise=pathwise,
                        diagnostics=diag)


def bootstrap_stderr(values: np.ndarray, seed: int = 0, resamples: int = 200) -> float:
    """Bootstrap standard error of the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.all(values == values.flat[0]):
        return 0.0
    rng = np.random.default_rng([seed, 0x5EED])
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    return float(np.std(values[idx].mean(axis=1), ddof=1))


@dataclass(frozen=True)
class CostEstimate:
    J: float
    stderr: float
    M: int
    N: int
    seed: int
    bundle: PathBundle = field(repr=False)
    solution: BSDESolution = field(repr=False)

    def __iter__(self):
        yield self.J
        yield self.stderr

    def to_dict(self) -> dict:
        return {"J": self.J, "stderr": self.stderr, "M": self.M, "N": self.N,
                "seed": self.seed, "diagnostics": self.solution.diagnostics}


def cost_J(spec: ProblemSpec, policy, t: float, x: float, M: int = 10_000, N: int = 100,
           seed: int = 0, basis_degree: int = 4, bootstrap: int = 200) -> CostEstimate:
    """Estimate ``J(t, x; policy)`` with a bootstrap standard error.

    Unpacks as ``(J, stderr)``.
    """
    bundle = simulate_paths(spec, policy, t, x, M, N, seed)
    sol = solve_bsde(bundle, spec, basis_degree)
    se = bootstrap_stderr(sol.pathwise, seed, bootstrap)
    return CostEstimate(sol.Y0, se, M, N, seed, bundle, sol)


# --------------------------------------------------------------------------
# comparison


def _same_dynamics(s1: ProblemSpec, s2: ProblemSpec) -> bool:
    return (s1.drift.to_config() == s2.drift.to_config()
            and s1.diffusion.to_config() == s2.diffusion.to_config()
            and s1.T == s2.T and s1.U == s2.U and s1.V == s2.V)


def check_dominance(spec1: ProblemSpec, spec2: ProblemSpec, samples: int = 2000,
                    seed: int = 0, tol: float = 1e-12) -> None:
    """Raise :class:`ValidationError` unless ``g1 <= g2`` and ``h1 <= h2`` at samples."""
    rng = np.random.default_rng(seed)
    lo, hi = spec1.sample_box
    ylo1, yhi1 = generator_y_range(spec1)
    ylo2, yhi2 = generator_y_range(spec2)
    ylo, yhi = max(ylo1, ylo2), min(yhi1, yhi2)
    t = rng.uniform(0, spec1.T, samples)
    x = rng.uniform(lo, hi, samples)
    y = rng.uniform(ylo, yhi, samples)
    z = rng.uniform(-5, 5, samples)
    u = spec1.U.points[rng.integers(0, spec1.U.size, samples)]
    v = spec1.V.points[rng.integers(0, spec1.V.size, samples)]
    dg = spec1.g(t, x, y, z, u, v) - spec2.g(t, x, y, z, u, v)
    if np.any(dg > tol):
        i = int(np.argmax(dg))
        raise ValidationError(f"generator dominance fails at t={t[i]:.4g}, x={x[i]:.4g}, "
                              f"y={y[i]:.4g} (g1 - g2 = {dg[i]:.3g})")
    dh = spec1.h(x) - spec2.h(x)
    if np.any(dh > tol):
        i = int(np.argmax(dh))
        raise ValidationError(f"terminal dominance fails at x={x[i]:.4g}")


@dataclass(frozen=True)
class ComparisonReport:
    J1: float
    J2: float
    stderr: float
    violation: float
    holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def comparison_probe(spec1: ProblemSpec, spec2: ProblemSpec, policy, t: float, x: float,
                     M: int = 2000, N: int = 50, seed: int = 0, basis_degree: int = 4,
                     bootstrap: int = 200) -> ComparisonReport:
    """Check ``J1 <= J2 + 3 stderr`` on shared paths (common random numbers).

    ``stderr`` is the bootstrap error of the paired pathwise cost difference.
    """
    if not _same_dynamics(spec1, spec2):
        raise ValidationError("comparison needs identical dynamics and control sets")
    check_dominance(spec1, spec2, seed=seed)
    bundle = simulate_paths(spec1, policy, t, x, M, N, seed)
    s1 = solve_bsde(bundle, spec1, basis_degree)
    s2 = solve_bsde(bundle, spec2, basis_degree)
    se = bootstrap_stderr(s2.pathwise - s1.pathwise, seed, bootstrap)
    violation = max(0.0, s1.Y0 - s2.Y0 - 3.0 * se)
    return ComparisonReport(s1.Y0, s2.Y0, se, violation, violation == 0.0)
