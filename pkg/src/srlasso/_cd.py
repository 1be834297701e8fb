"""Compiled coordinate-descent kernel for the weighted-L1 least-squares subproblem.

Minimizes ``(1/2n) sum_i v_i (y_i - b - x_i beta)**2 + sum_j pen_j |beta_j|``
in place. ``r`` must hold the current residual ``y - b - X beta`` on entry
and is kept in sync. Columns with infinite ``pen_j`` are never visited.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _objective(r, v, beta, pen, n):
    loss = 0.0
    for i in range(r.shape[0]):
        loss += v[i] * r[i] * r[i]
    reg = 0.0
    for j in range(beta.shape[0]):
        if beta[j] != 0.0:
            reg += pen[j] * abs(beta[j])
    return 0.5 * loss / n + reg


@njit(cache=True)
def _sweep(X, v, h, pen, beta, r, idx, m, vsum, fit_intercept, b, n):
    """One pass over the first ``m`` entries of ``idx`` then the intercept.

    Returns (max scaled change, new intercept).
    """
    dmax = 0.0
    nobs = X.shape[0]
    for t in range(m):
        j = idx[t]
        old = beta[j]
        g = 0.0
        for i in range(nobs):
            g += v[i] * X[i, j] * r[i]
        g = g / n + h[j] * old
        if g > pen[j]:
            new = (g - pen[j]) / h[j]
        elif g < -pen[j]:
            new = (g + pen[j]) / h[j]
        else:
            new = 0.0
        if new != old:
            delta = new - old
            beta[j] = new
            for i in range(nobs):
                r[i] -= X[i, j] * delta
            d = abs(delta) * np.sqrt(h[j])
            if d > dmax:
                dmax = d
    if fit_intercept:
        s = 0.0
        for i in range(nobs):
            s += v[i] * r[i]
        delta = s / vsum
        if delta != 0.0:
            b += delta
            for i in range(nobs):
                r[i] -= delta
            d = abs(delta) * np.sqrt(vsum / n)
            if d > dmax:
                dmax = d
    return dmax, b


@njit(cache=True)
def cd_solve(X, v, h, pen, beta, r, b, tol, max_iter, active_set, fit_intercept, trace):
    """Run sweeps until the largest scaled coefficient change drops below ``tol``.

    The scaled change of coordinate j is ``sqrt(h_j) * |delta_j|`` with
    ``h_j = sum_i v_i x_ij**2 / n``, which equals the raw change on
    standardized columns and is invariant to rescaling a column.
    A full sweep opens every solve and certifies convergence; in between,
    sweeps run over the nonzero coefficients only.

    Returns (intercept, sweeps used, converged). When ``trace`` is non-empty
    the objective after each sweep is written into it.
    """
    n = X.shape[0]
    q = X.shape[1]
    vsum = 0.0
    for i in range(n):
        vsum += v[i]
    full = np.empty(q, dtype=np.int64)
    m_full = 0
    for j in range(q):
        if np.isfinite(pen[j]) and h[j] > 0.0:
            full[m_full] = j
            m_full += 1
    act = np.empty(q, dtype=np.int64)
    record = trace.shape[0] > 0
    sweeps = 0
    while sweeps < max_iter:
        dmax, b = _sweep(X, v, h, pen, beta, r, full, m_full, vsum, fit_intercept, b, n)
        if record and sweeps < trace.shape[0]:
            trace[sweeps] = _objective(r, v, beta, pen, n)
        sweeps += 1
        if dmax < tol:
            return b, sweeps, True
        if not active_set:
            continue
        m_act = 0
        for t in range(m_full):
            j = full[t]
            if beta[j] != 0.0:
                act[m_act] = j
                m_act += 1
        while sweeps < max_iter:
            dmax, b = _sweep(X, v, h, pen, beta, r, act, m_act, vsum, fit_intercept, b, n)
            if record and sweeps < trace.shape[0]:
                trace[sweeps] = _objective(r, v, beta, pen, n)
            sweeps += 1
            if dmax < tol:
                break
    return b, sweeps, False


@njit(cache=True)
def _cov_sweep(C, pen, beta, g, idx, m):
    dmax = 0.0
    q = C.shape[0]
    for t in range(m):
        j = idx[t]
        cjj = C[j, j]
        old = beta[j]
        u = g[j] + cjj * old
        if u > pen[j]:
            new = (u - pen[j]) / cjj
        elif u < -pen[j]:
            new = (u + pen[j]) / cjj
        else:
            new = 0.0
        if new != old:
            delta = new - old
            beta[j] = new
            for k in range(q):
                g[k] -= C[j, k] * delta
            d = abs(delta) * np.sqrt(cjj)
            if d > dmax:
                dmax = d
    return dmax


@njit(cache=True)
def cd_solve_cov(C, zy, pen, beta, g, tol, max_iter, active_set, trace):
    """Covariance-update variant for gaussian fits with the intercept profiled out.

    Minimizes ``beta' C beta / 2 - zy' beta + sum_j pen_j |beta_j|`` where
    ``C`` is the centered cross-product matrix over n and ``zy`` the centered
    cross-products with y. ``g = zy - C beta`` must be current on entry.
    Same sweep schedule and stopping rule as :func:`cd_solve`.
    """
    q = C.shape[0]
    full = np.empty(q, dtype=np.int64)
    m_full = 0
    for j in range(q):
        if np.isfinite(pen[j]) and C[j, j] > 0.0:
            full[m_full] = j
            m_full += 1
    act = np.empty(q, dtype=np.int64)
    record = trace.shape[0] > 0
    sweeps = 0
    while sweeps < max_iter:
        dmax = _cov_sweep(C, pen, beta, g, full, m_full)
        if record and sweeps < trace.shape[0]:
            trace[sweeps] = _cov_objective(zy, pen, beta, g)
        sweeps += 1
        if dmax < tol:
            return sweeps, True
        if not active_set:
            continue
        m_act = 0
        for t in range(m_full):
            j = full[t]
            if beta[j] != 0.0:
                act[m_act] = j
                m_act += 1
        while sweeps < max_iter:
            dmax = _cov_sweep(C, pen, beta, g, act, m_act)
            if record and sweeps < trace.shape[0]:
                trace[sweeps] = _cov_objective(zy, pen, beta, g)
            sweeps += 1
            if dmax < tol:
                break
    return sweeps, False


@njit(cache=True)
def _cov_objective(zy, pen, beta, g):
    # beta'C beta/2 - zy'beta = -beta'(zy + g)/2
    val = 0.0
    for j in range(beta.shape[0]):
        if beta[j] != 0.0:
            val += -0.5 * beta[j] * (zy[j] + g[j]) + pen[j] * abs(beta[j])
    return val
