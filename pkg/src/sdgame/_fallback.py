"""Pure numpy version of the compiled HJBI time step (same signature, same arithmetic)."""

from __future__ import annotations

import numpy as np

OK, NONFINITE, DOMAIN, NOCONV = 0, 1, 2, 3


def _phi(y, s, e, qn, qw):
    acc = np.zeros_like(y)
    bad = np.zeros(y.shape, dtype=bool)
    for n, w in zip(qn, qw):
        base = s * (y - n)
        bad |= base < 0.0
        pos = base > 0.0
        term = np.zeros_like(y)
        term[pos] = w * np.power(base[pos], e)
        acc = acc + term
    return acc, bad


def _reduce(vals, n_u, n_v, lower):
    m = vals.reshape(vals.shape[0], n_u, n_v)
    if lower:
        return m.min(axis=2).max(axis=1)
    return m.max(axis=1).min(axis=1)


def hjbi_step(w_next, w_out, half_s2, drift, g0, gzs, gy, gp, qn, qw, phi_sign, phi_exp,
              n_u, n_v, lower, y_dep, has_phi, dx, dt, tol, maxit, status, iters,
              num_threads=1):
    w = np.asarray(w_next)
    n = w.shape[0]
    d2 = np.zeros(n)
    dp = np.empty(n)
    dm = np.empty(n)
    dc = np.empty(n)
    d2[1:-1] = ((w[2:] - 2.0 * w[1:-1]) + w[:-2]) / (dx * dx)
    dp[1:-1] = (w[2:] - w[1:-1]) / dx
    dm[1:-1] = (w[1:-1] - w[:-2]) / dx
    dc[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
    for i, j in ((0, 1), (n - 1, n - 1)):
        dp[i] = dm[i] = dc[i] = (w[j] - w[j - 1]) / dx
    status[:] = OK
    iters[:] = 0
    bad_d = ~(np.isfinite(d2) & np.isfinite(dp) & np.isfinite(dm))
    status[bad_d] = NONFINITE

    up = np.where(drift > 0.0, drift * dp[:, None], drift * dm[:, None])
    static = half_s2 * d2[:, None] + up + g0 + gzs * dc[:, None]

    active = ~bad_d
    y = w.copy()
    out = np.zeros(n)
    for it in range(maxit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[idx]
        vals = static[idx]
        if has_phi:
            ph, bad = _phi(ya, phi_sign, phi_exp, qn, qw)
            if np.any(bad):
                status[idx[bad]] = DOMAIN
                active[idx[bad]] = False
                keep = ~bad
                idx, ya, vals, ph = idx[keep], ya[keep], vals[keep], ph[keep]
        else:
            ph = np.zeros_like(ya)
        if y_dep:
            vals = vals + (gy[idx] * ya[:, None] + gp[idx] * ph[:, None])
        best = _reduce(vals, n_u, n_v, lower)
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
        out[left] = y[left]
        iters[left] = maxit
        status[left] = NOCONV
    w_out[:] = out
