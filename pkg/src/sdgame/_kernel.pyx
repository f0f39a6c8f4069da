# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled explicit HJBI time step for structured generators.

Mirrors ``sdgame._fallback.hjbi_step`` operation by operation so that both
backends agree to the last bit on the same inputs.
"""

from cython.parallel cimport prange
from libc.math cimport INFINITY, fabs, isfinite, pow

cdef enum:
    OK = 0
    NONFINITE = 1
    DOMAIN = 2
    NOCONV = 3


cdef inline double _phi(double y, double s, double e, const double[::1] qn,
                        const double[::1] qw, int* bad) noexcept nogil:
    cdef double acc = 0.0
    cdef double base
    cdef Py_ssize_t j
    for j in range(qn.shape[0]):
        base = s * (y - qn[j])
        if base < 0.0:
            bad[0] = 1
            return 0.0
        if base > 0.0:
            acc = acc + qw[j] * pow(base, e)
    return acc


cdef int _node(Py_ssize_t i, Py_ssize_t n, const double[::1] w,
               double* out, int* used,
               const double[:, ::1] half_s2, const double[:, ::1] drift,
               const double[:, ::1] g0, const double[:, ::1] gzs,
               const double[:, ::1] gy, const double[:, ::1] gp,
               const double[::1] qn, const double[::1] qw, double s, double e,
               int n_u, int n_v, bint lower, bint y_dep, bint has_phi,
               double dx, double dt, double tol, int maxit) noexcept nogil:
    cdef double d2, dp, dm, dc, y, ynew, ph, val, inner, best, up
    cdef int it, iu, iv, a, bad = 0
    if i == 0:
        d2 = 0.0
        dp = (w[1] - w[0]) / dx
        dm = dp
        dc = dp
    elif i == n - 1:
        d2 = 0.0
        dp = (w[n - 1] - w[n - 2]) / dx
        dm = dp
        dc = dp
    else:
        d2 = ((w[i + 1] - 2.0 * w[i]) + w[i - 1]) / (dx * dx)
        dp = (w[i + 1] - w[i]) / dx
        dm = (w[i] - w[i - 1]) / dx
        dc = (w[i + 1] - w[i - 1]) / (2.0 * dx)
    if not (isfinite(d2) and isfinite(dp) and isfinite(dm)):
        return NONFINITE
    y = w[i]
    ph = 0.0
    for it in range(maxit):
        if has_phi:
            ph = _phi(y, s, e, qn, qw, &bad)
            if bad:
                return DOMAIN
        if lower:
            best = -INFINITY
            for iu in range(n_u):
                inner = INFINITY
                for iv in range(n_v):
                    a = iu * n_v + iv
                    if drift[i, a] > 0.0:
                        up = drift[i, a] * dp
                    else:
                        up = drift[i, a] * dm
                    val = half_s2[i, a] * d2 + up + g0[i, a] + gzs[i, a] * dc
                    if y_dep:
                        val = val + (gy[i, a] * y + gp[i, a] * ph)
                    if val < inner:
                        inner = val
                        if inner <= best:
                            break
                if inner > best:
                    best = inner
        else:
            best = INFINITY
            for iv in range(n_v):
                inner = -INFINITY
                for iu in range(n_u):
                    a = iu * n_v + iv
                    if drift[i, a] > 0.0:
                        up = drift[i, a] * dp
                    else:
                        up = drift[i, a] * dm
                    val = half_s2[i, a] * d2 + up + g0[i, a] + gzs[i, a] * dc
                    if y_dep:
                        val = val + (gy[i, a] * y + gp[i, a] * ph)
                    if val > inner:
                        inner = val
                        if inner >= best:
                            break
                if inner < best:
                    best = inner
        ynew = w[i] + dt * best
        if not isfinite(ynew):
            return NONFINITE
        if not y_dep:
            out[0] = ynew
            used[0] = 1
            return OK
        if fabs(ynew - y) <= tol * (1.0 + fabs(ynew)):
            out[0] = ynew
            used[0] = it + 1
            return OK
        y = ynew
    out[0] = y
    used[0] = maxit
    return NOCONV


def hjbi_step(const double[::1] w_next, double[::1] w_out,
              const double[:, ::1] half_s2, const double[:, ::1] drift,
              const double[:, ::1] g0, const double[:, ::1] gzs,
              const double[:, ::1] gy, const double[:, ::1] gp,
              const double[::1] qn, const double[::1] qw,
              double phi_sign, double phi_exp,
              int n_u, int n_v, bint lower, bint y_dep, bint has_phi,
              double dx, double dt, double tol, int maxit,
              int[::1] status, int[::1] iters, int num_threads=1):
    """Advance one step backward in time; per-node status codes land in ``status``."""
    cdef Py_ssize_t n = w_next.shape[0]
    cdef Py_ssize_t i
    cdef double res
    cdef int used
    for i in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        res = 0.0
        used = 0
        status[i] = _node(i, n, w_next, &res, &used, half_s2, drift, g0, gzs, gy, gp,
                          qn, qw, phi_sign, phi_exp, n_u, n_v, lower, y_dep, has_phi,
                          dx, dt, tol, maxit)
        w_out[i] = res
        iters[i] = used
