"""numba implementations of the hot loops.

Every function here has a twin with the same signature in ``_numpy``.
Randomness never enters a kernel except as pre-drawn uniforms, so the two
backends follow identical trajectories up to floating point rounding.
"""

import math

import numpy as np
from numba import njit

VAR_FLOOR = 1e-10
_LOG_PI = math.log(math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# collapsed allocation sweep, univariate
# ---------------------------------------------------------------------------

@njit(cache=True)
def _slot_1d(cnt, s1, s2, mu0, k0, nu, psi, lc):
    """Student-t posterior predictive for a cluster with the given stats.

    Returns (loc, 1/(df*scale2), (df+1)/2, log normaliser) and adds
    ``lc`` (log count or log concentration) to the normaliser.
    """
    kn = k0 + cnt
    df = nu + cnt
    if cnt > 0:
        xbar = s1 / cnt
        ss = s2 - s1 * xbar
        if ss < 0.0:
            ss = 0.0
        d = xbar - mu0
        psin = psi + ss + k0 * cnt / kn * d * d
        loc = (k0 * mu0 + s1) / kn
    else:
        psin = psi
        loc = mu0
    scale2 = psin * (kn + 1.0) / (kn * df)
    if scale2 < VAR_FLOOR:
        scale2 = VAR_FLOOR
    const = (math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df)
             - 0.5 * (math.log(df * scale2) + _LOG_PI))
    return loc, 1.0 / (df * scale2), 0.5 * (df + 1.0), const + lc


@njit(cache=True)
def alloc_sweep_1d(x, labels, uniforms, order, mu0, k0, nu, psi, c):
    n = x.shape[0]
    cap = n + 1
    cnt = np.zeros(cap, np.int64)
    s1 = np.zeros(cap)
    s2 = np.zeros(cap)
    hi = 0
    for i in range(n):
        k = labels[i]
        cnt[k] += 1
        s1[k] += x[i]
        s2[k] += x[i] * x[i]
        if k + 1 > hi:
            hi = k + 1

    loc = np.zeros(cap)
    inv = np.zeros(cap)
    half = np.zeros(cap)
    base = np.zeros(cap)
    free = np.empty(cap, np.int64)
    nfree = 0
    for j in range(hi - 1, -1, -1):
        if cnt[j] > 0:
            loc[j], inv[j], half[j], base[j] = _slot_1d(
                cnt[j], s1[j], s2[j], mu0, k0, nu, psi, math.log(cnt[j]))
        else:
            free[nfree] = j
            nfree += 1
    ploc, pinv, phalf, pbase = _slot_1d(0, 0.0, 0.0, mu0, k0, nu, psi,
                                        math.log(c))

    w = np.zeros(cap)
    for ii in range(n):
        i = order[ii]
        xi = x[i]
        k = labels[i]
        cnt[k] -= 1
        if cnt[k] == 0:
            s1[k] = 0.0
            s2[k] = 0.0
            free[nfree] = k
            nfree += 1
        else:
            s1[k] -= xi
            s2[k] -= xi * xi
            loc[k], inv[k], half[k], base[k] = _slot_1d(
                cnt[k], s1[k], s2[k], mu0, k0, nu, psi, math.log(cnt[k]))

        m = -np.inf
        for j in range(hi):
            if cnt[j] > 0:
                d = xi - loc[j]
                lw = base[j] - half[j] * math.log1p(d * d * inv[j])
                w[j] = lw
                if lw > m:
                    m = lw
        d = xi - ploc
        lnew = pbase - phalf * math.log1p(d * d * pinv)
        if lnew > m:
            m = lnew

        total = 0.0
        for j in range(hi):
            if cnt[j] > 0:
                total += math.exp(w[j] - m)
                w[j] = total
        total += math.exp(lnew - m)
        target = uniforms[i] * total
        chosen = -1
        for j in range(hi):
            if cnt[j] > 0 and target < w[j]:
                chosen = j
                break
        if chosen < 0:
            if nfree > 0:
                nfree -= 1
                chosen = free[nfree]
            else:
                chosen = hi
                hi += 1
        cnt[chosen] += 1
        s1[chosen] += xi
        s2[chosen] += xi * xi
        loc[chosen], inv[chosen], half[chosen], base[chosen] = _slot_1d(
            cnt[chosen], s1[chosen], s2[chosen], mu0, k0, nu, psi,
            math.log(cnt[chosen]))
        labels[i] = chosen

    # relabel by order of first appearance
    remap = np.full(hi, -1, np.int64)
    K = 0
    for i in range(n):
        lab = labels[i]
        if remap[lab] < 0:
            remap[lab] = K
            K += 1
        labels[i] = remap[lab]
    ocnt = np.zeros(K, np.int64)
    os1 = np.zeros(K)
    os2 = np.zeros(K)
    for j in range(hi):
        r = remap[j]
        if r >= 0:
            ocnt[r] = cnt[j]
            os1[r] = s1[j]
            os2[r] = s2[j]
    return labels, ocnt, os1, os2


# ---------------------------------------------------------------------------
# collapsed allocation sweep, bivariate
# ---------------------------------------------------------------------------

@njit(cache=True)
def _slot_2d(cnt, a0, a1, q00, q01, q11, mu0, k0, nu, psi, lc):
    """Bivariate Student-t predictive; returns loc, scaled precision, consts."""
    kn = k0 + cnt
    df = nu + cnt - 1.0
    p00 = psi[0, 0]
    p01 = psi[0, 1]
    p11 = psi[1, 1]
    if cnt > 0:
        x0 = a0 / cnt
        x1 = a1 / cnt
        d0 = x0 - mu0[0]
        d1 = x1 - mu0[1]
        f = k0 * cnt / kn
        p00 += q00 - cnt * x0 * x0 + f * d0 * d0
        p01 += q01 - cnt * x0 * x1 + f * d0 * d1
        p11 += q11 - cnt * x1 * x1 + f * d1 * d1
        l0 = (k0 * mu0[0] + a0) / kn
        l1 = (k0 * mu0[1] + a1) / kn
    else:
        l0 = mu0[0]
        l1 = mu0[1]
    g = (kn + 1.0) / (kn * df)
    s00 = p00 * g
    s01 = p01 * g
    s11 = p11 * g
    det = s00 * s11 - s01 * s01
    if det < VAR_FLOOR * VAR_FLOOR or s00 < VAR_FLOOR or s11 < VAR_FLOOR:
        s00 += VAR_FLOOR
        s11 += VAR_FLOOR
        det = s00 * s11 - s01 * s01
        if det < VAR_FLOOR * VAR_FLOOR:
            s01 = 0.0
            det = s00 * s11
    const = (math.lgamma(0.5 * (df + 2.0)) - math.lgamma(0.5 * df)
             - math.log(df) - _LOG_PI - 0.5 * math.log(det))
    r = 1.0 / (det * df)
    return (l0, l1, s11 * r, -s01 * r, s00 * r, 0.5 * (df + 2.0),
            const + lc)


@njit(cache=True)
def alloc_sweep_2d(x, labels, uniforms, order, mu0, k0, nu, psi, c):
    n = x.shape[0]
    cap = n + 1
    cnt = np.zeros(cap, np.int64)
    s1 = np.zeros((cap, 2))
    s2 = np.zeros((cap, 3))
    hi = 0
    for i in range(n):
        k = labels[i]
        u = x[i, 0]
        v = x[i, 1]
        cnt[k] += 1
        s1[k, 0] += u
        s1[k, 1] += v
        s2[k, 0] += u * u
        s2[k, 1] += u * v
        s2[k, 2] += v * v
        if k + 1 > hi:
            hi = k + 1

    par = np.zeros((cap, 7))
    free = np.empty(cap, np.int64)
    nfree = 0
    for j in range(hi - 1, -1, -1):
        if cnt[j] > 0:
            r = _slot_2d(cnt[j], s1[j, 0], s1[j, 1], s2[j, 0], s2[j, 1],
                         s2[j, 2], mu0, k0, nu, psi, math.log(cnt[j]))
            for t in range(7):
                par[j, t] = r[t]
        else:
            free[nfree] = j
            nfree += 1
    pr = _slot_2d(0, 0.0, 0.0, 0.0, 0.0, 0.0, mu0, k0, nu, psi, math.log(c))

    w = np.zeros(cap)
    for ii in range(n):
        i = order[ii]
        u = x[i, 0]
        v = x[i, 1]
        k = labels[i]
        cnt[k] -= 1
        if cnt[k] == 0:
            for t in range(2):
                s1[k, t] = 0.0
            for t in range(3):
                s2[k, t] = 0.0
            free[nfree] = k
            nfree += 1
        else:
            s1[k, 0] -= u
            s1[k, 1] -= v
            s2[k, 0] -= u * u
            s2[k, 1] -= u * v
            s2[k, 2] -= v * v
            r = _slot_2d(cnt[k], s1[k, 0], s1[k, 1], s2[k, 0], s2[k, 1],
                         s2[k, 2], mu0, k0, nu, psi, math.log(cnt[k]))
            for t in range(7):
                par[k, t] = r[t]

        m = -np.inf
        for j in range(hi):
            if cnt[j] > 0:
                d0 = u - par[j, 0]
                d1 = v - par[j, 1]
                q = par[j, 2] * d0 * d0 + 2.0 * par[j, 3] * d0 * d1 \
                    + par[j, 4] * d1 * d1
                lw = par[j, 6] - par[j, 5] * math.log1p(q)
                w[j] = lw
                if lw > m:
                    m = lw
        d0 = u - pr[0]
        d1 = v - pr[1]
        q = pr[2] * d0 * d0 + 2.0 * pr[3] * d0 * d1 + pr[4] * d1 * d1
        lnew = pr[6] - pr[5] * math.log1p(q)
        if lnew > m:
            m = lnew

        total = 0.0
        for j in range(hi):
            if cnt[j] > 0:
                total += math.exp(w[j] - m)
                w[j] = total
        total += math.exp(lnew - m)
        target = uniforms[i] * total
        chosen = -1
        for j in range(hi):
            if cnt[j] > 0 and target < w[j]:
                chosen = j
                break
        if chosen < 0:
            if nfree > 0:
                nfree -= 1
                chosen = free[nfree]
            else:
                chosen = hi
                hi += 1
        cnt[chosen] += 1
        s1[chosen, 0] += u
        s1[chosen, 1] += v
        s2[chosen, 0] += u * u
        s2[chosen, 1] += u * v
        s2[chosen, 2] += v * v
        r = _slot_2d(cnt[chosen], s1[chosen, 0], s1[chosen, 1],
                     s2[chosen, 0], s2[chosen, 1], s2[chosen, 2],
                     mu0, k0, nu, psi, math.log(cnt[chosen]))
        for t in range(7):
            par[chosen, t] = r[t]
        labels[i] = chosen

    remap = np.full(hi, -1, np.int64)
    K = 0
    for i in range(n):
        lab = labels[i]
        if remap[lab] < 0:
            remap[lab] = K
            K += 1
        labels[i] = remap[lab]
    ocnt = np.zeros(K, np.int64)
    os1 = np.zeros((K, 2))
    os2 = np.zeros((K, 3))
    for j in range(hi):
        r = remap[j]
        if r >= 0:
            ocnt[r] = cnt[j]
            os1[r, :] = s1[j, :]
            os2[r, :] = s2[j, :]
    return labels, ocnt, os1, os2


# ---------------------------------------------------------------------------
# predictive mixture densities
# ---------------------------------------------------------------------------

@njit(cache=True)
def mixture_density_1d(z, weights, means, variances, w_new, t_df, t_loc,
                       t_scale2, out):
    m = z.shape[0]
    K = weights.shape[0]
    tconst = (math.lgamma(0.5 * (t_df + 1.0)) - math.lgamma(0.5 * t_df)
              - 0.5 * (math.log(t_df * t_scale2) + _LOG_PI))
    coef = np.empty(K)
    for k in range(K):
        coef[k] = weights[k] / math.sqrt(2.0 * math.pi * variances[k])
    for i in range(m):
        zi = z[i]
        acc = 0.0
        for k in range(K):
            d = zi - means[k]
            acc += coef[k] * math.exp(-0.5 * d * d / variances[k])
        d = zi - t_loc
        acc += w_new * math.exp(
            tconst - 0.5 * (t_df + 1.0) * math.log1p(d * d / (t_df * t_scale2)))
        out[i] += acc
    return out


@njit(cache=True)
def mixture_density_2d(z, weights, means, covs, w_new, t_df, t_loc, t_scale,
                       out):
    m = z.shape[0]
    K = weights.shape[0]
    pre = np.empty((K, 4))
    for k in range(K):
        a = covs[k, 0, 0]
        b = covs[k, 0, 1]
        d = covs[k, 1, 1]
        det = a * d - b * b
        pre[k, 0] = d / det
        pre[k, 1] = -b / det
        pre[k, 2] = a / det
        pre[k, 3] = weights[k] / (2.0 * math.pi * math.sqrt(det))
    a = t_scale[0, 0]
    b = t_scale[0, 1]
    d = t_scale[1, 1]
    tdet = a * d - b * b
    t00 = d / tdet
    t01 = -b / tdet
    t11 = a / tdet
    tconst = (math.lgamma(0.5 * (t_df + 2.0)) - math.lgamma(0.5 * t_df)
              - math.log(t_df) - _LOG_PI - 0.5 * math.log(tdet))
    for i in range(m):
        u = z[i, 0]
        v = z[i, 1]
        acc = 0.0
        for k in range(K):
            d0 = u - means[k, 0]
            d1 = v - means[k, 1]
            q = pre[k, 0] * d0 * d0 + 2.0 * pre[k, 1] * d0 * d1 \
                + pre[k, 2] * d1 * d1
            acc += pre[k, 3] * math.exp(-0.5 * q)
        d0 = u - t_loc[0]
        d1 = v - t_loc[1]
        q = t00 * d0 * d0 + 2.0 * t01 * d0 * d1 + t11 * d1 * d1
        acc += w_new * math.exp(tconst - 0.5 * (t_df + 2.0)
                                * math.log1p(q / t_df))
        out[i] += acc
    return out


# ---------------------------------------------------------------------------
# contingency-table Bayes factors over a pair of traces
# ---------------------------------------------------------------------------

@njit(cache=True)
def _log_bf_table(table, rows, cols, n, alpha, total_rule):
    kx = rows.shape[0]
    ky = cols.shape[0]
    if kx == 1 or ky == 1:
        # every Gamma ratio cancels against a margin term
        return 0.0
    if total_rule:
        cell = alpha / (kx * ky)
        a = alpha
    else:
        cell = alpha
        a = alpha * kx * ky
    ar = cell * ky
    ac = cell * kx
    out = math.lgamma(a) - math.lgamma(a + n)
    lg_ar = math.lgamma(ar)
    for k in range(kx):
        out += math.lgamma(ar + rows[k]) - lg_ar
    lg_ac = math.lgamma(ac)
    for l in range(ky):
        out += math.lgamma(ac + cols[l]) - lg_ac
    lg_cell = math.lgamma(cell)
    for k in range(kx):
        for l in range(ky):
            m = table[k, l]
            if m > 0:
                out += lg_cell - math.lgamma(cell + m)
    return out


@njit(cache=True)
def trace_log_bf(lx, ly, alpha, total_rule):
    S = lx.shape[0]
    n = lx.shape[1]
    out = np.empty(S)
    if S == 0:
        return out
    top = 0
    for s in range(S):
        for i in range(n):
            if lx[s, i] > top:
                top = lx[s, i]
            if ly[s, i] > top:
                top = ly[s, i]
    mapx = np.full(top + 1, -1, np.int64)
    mapy = np.full(top + 1, -1, np.int64)
    cx = np.empty(n, np.int64)
    cy = np.empty(n, np.int64)
    for s in range(S):
        kx = 0
        ky = 0
        for i in range(n):
            a = lx[s, i]
            if mapx[a] < 0:
                mapx[a] = kx
                kx += 1
            cx[i] = mapx[a]
            b = ly[s, i]
            if mapy[b] < 0:
                mapy[b] = ky
                ky += 1
            cy[i] = mapy[b]
        table = np.zeros((kx, ky), np.int64)
        rows = np.zeros(kx, np.int64)
        cols = np.zeros(ky, np.int64)
        for i in range(n):
            table[cx[i], cy[i]] += 1
            rows[cx[i]] += 1
            cols[cy[i]] += 1
        out[s] = _log_bf_table(table, rows, cols, n, alpha, total_rule)
        for i in range(n):
            mapx[lx[s, i]] = -1
            mapy[ly[s, i]] = -1
    return out


# ---------------------------------------------------------------------------
# k-nearest-neighbour counts under the max-norm
# ---------------------------------------------------------------------------

@njit(cache=True)
def knn_counts(x, y, k):
    n = x.shape[0]
    nx = np.zeros(n, np.int64)
    ny = np.zeros(n, np.int64)
    eps = np.zeros(n)
    dist = np.empty(n)
    for i in range(n):
        for j in range(n):
            dx = abs(x[i] - x[j])
            dy = abs(y[i] - y[j])
            dist[j] = dx if dx > dy else dy
        dist[i] = np.inf
        e = np.partition(dist, k - 1)[k - 1]
        eps[i] = e
        cx = 0
        cy = 0
        for j in range(n):
            if j != i:
                if abs(x[i] - x[j]) < e:
                    cx += 1
                if abs(y[i] - y[j]) < e:
                    cy += 1
        nx[i] = cx
        ny[i] = cy
    return nx, ny, eps
