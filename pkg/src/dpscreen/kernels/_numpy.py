"""Pure numpy implementations, selected with ``DPSCREEN_BACKEND=numpy``.

Sequential samplers keep a Python loop over data points and vectorise over
clusters; everything else is vectorised outright.  Results match ``_numba``
to rounding.
"""

import math

import numpy as np
from scipy.special import gammaln

VAR_FLOOR = 1e-10
_LOG_PI = math.log(math.pi)


def _slot_1d(cnt, s1, s2, mu0, k0, nu, psi, lc):
    kn = k0 + cnt
    df = nu + cnt
    if cnt > 0:
        xbar = s1 / cnt
        ss = max(s2 - s1 * xbar, 0.0)
        d = xbar - mu0
        psin = psi + ss + k0 * cnt / kn * d * d
        loc = (k0 * mu0 + s1) / kn
    else:
        psin = psi
        loc = mu0
    scale2 = max(psin * (kn + 1.0) / (kn * df), VAR_FLOOR)
    const = (math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df)
             - 0.5 * (math.log(df * scale2) + _LOG_PI))
    return loc, 1.0 / (df * scale2), 0.5 * (df + 1.0), const + lc


def _slot_2d(cnt, a0, a1, q00, q01, q11, mu0, k0, nu, psi, lc):
    kn = k0 + cnt
    df = nu + cnt - 1.0
    p00, p01, p11 = psi[0, 0], psi[0, 1], psi[1, 1]
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
        l0, l1 = mu0[0], mu0[1]
    g = (kn + 1.0) / (kn * df)
    s00, s01, s11 = p00 * g, p01 * g, p11 * g
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
    return (l0, l1, s11 * r, -s01 * r, s00 * r, 0.5 * (df + 2.0), const + lc)


def _compact(labels, hi):
    """Relabel in place by first appearance; return the old->new map and K."""
    remap = np.full(hi, -1, np.int64)
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    remap[order] = np.arange(order.size)
    labels[:] = remap[labels]
    return remap, order.size


def _choose(logw, lnew, u):
    m = max(logw.max(initial=-np.inf), lnew)
    cum = np.cumsum(np.exp(np.append(logw, lnew) - m))
    # first index whose cumulative weight exceeds the target
    return int(np.searchsorted(cum, u * cum[-1], side="right"))


def alloc_sweep_1d(x, labels, uniforms, order, mu0, k0, nu, psi, c):
    """One collapsed reallocation sweep over univariate data.

    Points are visited in ``order``; point ``i`` uses ``uniforms[i]`` to pick
    among existing clusters (weight n_k times the Student-t predictive) and
    a new cluster (weight c times the prior predictive).  ``labels`` are
    0-based.  Returns compacted labels (first appearance) with per-cluster
    counts, sums and sums of squares.
    """
    n = x.shape[0]
    cap = n + 1
    cnt = np.bincount(labels, minlength=cap).astype(np.int64)
    s1 = np.bincount(labels, weights=x, minlength=cap)
    s2 = np.bincount(labels, weights=x * x, minlength=cap)
    hi = int(labels.max()) + 1 if n else 0
    par = np.zeros((cap, 4))
    free = []
    for j in range(hi - 1, -1, -1):
        if cnt[j] > 0:
            par[j] = _slot_1d(cnt[j], s1[j], s2[j], mu0, k0, nu, psi,
                              math.log(cnt[j]))
        else:
            free.append(j)
    ploc, pinv, phalf, pbase = _slot_1d(0, 0.0, 0.0, mu0, k0, nu, psi,
                                        math.log(c))

    for ii in range(n):
        i = order[ii]
        xi = x[i]
        k = labels[i]
        cnt[k] -= 1
        if cnt[k] == 0:
            s1[k] = 0.0
            s2[k] = 0.0
            free.append(k)
        else:
            s1[k] -= xi
            s2[k] -= xi * xi
            par[k] = _slot_1d(cnt[k], s1[k], s2[k], mu0, k0, nu, psi,
                              math.log(cnt[k]))
        active = np.flatnonzero(cnt[:hi] > 0)
        p = par[active]
        d = xi - p[:, 0]
        logw = p[:, 3] - p[:, 2] * np.log1p(d * d * p[:, 1])
        d = xi - ploc
        lnew = pbase - phalf * math.log1p(d * d * pinv)
        pick = _choose(logw, lnew, uniforms[i])
        if pick < active.size:
            chosen = int(active[pick])
        elif free:
            chosen = free.pop()
        else:
            chosen = hi
            hi += 1
        cnt[chosen] += 1
        s1[chosen] += xi
        s2[chosen] += xi * xi
        par[chosen] = _slot_1d(cnt[chosen], s1[chosen], s2[chosen], mu0, k0,
                               nu, psi, math.log(cnt[chosen]))
        labels[i] = chosen

    if n == 0:
        return labels, np.zeros(0, np.int64), np.zeros(0), np.zeros(0)
    remap, K = _compact(labels, hi)
    keep = np.flatnonzero(remap >= 0)
    order = np.empty(K, np.int64)
    order[remap[keep]] = keep
    return labels, cnt[order], s1[order], s2[order]


def alloc_sweep_2d(x, labels, uniforms, order, mu0, k0, nu, psi, c):
    """Bivariate twin of :func:`alloc_sweep_1d`; second moments are stored
    as (xx, xy, yy) per cluster."""
    n = x.shape[0]
    cap = n + 1
    cnt = np.bincount(labels, minlength=cap).astype(np.int64)
    s1 = np.zeros((cap, 2))
    s2 = np.zeros((cap, 3))
    if n:
        s1[:, 0] = np.bincount(labels, weights=x[:, 0], minlength=cap)
        s1[:, 1] = np.bincount(labels, weights=x[:, 1], minlength=cap)
        s2[:, 0] = np.bincount(labels, weights=x[:, 0] ** 2, minlength=cap)
        s2[:, 1] = np.bincount(labels, weights=x[:, 0] * x[:, 1],
                               minlength=cap)
        s2[:, 2] = np.bincount(labels, weights=x[:, 1] ** 2, minlength=cap)
    hi = int(labels.max()) + 1 if n else 0
    par = np.zeros((cap, 7))
    free = []

    def refresh(j):
        par[j] = _slot_2d(cnt[j], s1[j, 0], s1[j, 1], s2[j, 0], s2[j, 1],
                          s2[j, 2], mu0, k0, nu, psi, math.log(cnt[j]))

    for j in range(hi - 1, -1, -1):
        if cnt[j] > 0:
            refresh(j)
        else:
            free.append(j)
    pr = _slot_2d(0, 0.0, 0.0, 0.0, 0.0, 0.0, mu0, k0, nu, psi, math.log(c))

    for ii in range(n):
        i = order[ii]
        u, v = x[i, 0], x[i, 1]
        k = labels[i]
        cnt[k] -= 1
        if cnt[k] == 0:
            s1[k] = 0.0
            s2[k] = 0.0
            free.append(k)
        else:
            s1[k] -= (u, v)
            s2[k] -= (u * u, u * v, v * v)
            refresh(k)
        active = np.flatnonzero(cnt[:hi] > 0)
        p = par[active]
        d0 = u - p[:, 0]
        d1 = v - p[:, 1]
        q = p[:, 2] * d0 * d0 + 2.0 * p[:, 3] * d0 * d1 + p[:, 4] * d1 * d1
        logw = p[:, 6] - p[:, 5] * np.log1p(q)
        d0 = u - pr[0]
        d1 = v - pr[1]
        q = pr[2] * d0 * d0 + 2.0 * pr[3] * d0 * d1 + pr[4] * d1 * d1
        lnew = pr[6] - pr[5] * math.log1p(q)
        pick = _choose(logw, lnew, uniforms[i])
        if pick < active.size:
            chosen = int(active[pick])
        elif free:
            chosen = free.pop()
        else:
            chosen = hi
            hi += 1
        cnt[chosen] += 1
        s1[chosen] += (u, v)
        s2[chosen] += (u * u, u * v, v * v)
        refresh(chosen)
        labels[i] = chosen

    if n == 0:
        return (labels, np.zeros(0, np.int64), np.zeros((0, 2)),
                np.zeros((0, 3)))
    remap, K = _compact(labels, hi)
    keep = np.flatnonzero(remap >= 0)
    order = np.empty(K, np.int64)
    order[remap[keep]] = keep
    return labels, cnt[order], s1[order], s2[order]


def mixture_density_1d(z, weights, means, variances, w_new, t_df, t_loc,
                       t_scale2, out):
    if weights.size:
        d = z[:, None] - means[None, :]
        dens = np.exp(-0.5 * d * d / variances) / np.sqrt(
            2.0 * math.pi * variances)
        out += dens @ weights
    tconst = (math.lgamma(0.5 * (t_df + 1.0)) - math.lgamma(0.5 * t_df)
              - 0.5 * (math.log(t_df * t_scale2) + _LOG_PI))
    d = z - t_loc
    out += w_new * np.exp(
        tconst - 0.5 * (t_df + 1.0) * np.log1p(d * d / (t_df * t_scale2)))
    return out


def mixture_density_2d(z, weights, means, covs, w_new, t_df, t_loc, t_scale,
                       out):
    if weights.size:
        a = covs[:, 0, 0]
        b = covs[:, 0, 1]
        dd = covs[:, 1, 1]
        det = a * dd - b * b
        d0 = z[:, 0:1] - means[None, :, 0]
        d1 = z[:, 1:2] - means[None, :, 1]
        q = (dd * d0 * d0 - 2.0 * b * d0 * d1 + a * d1 * d1) / det
        out += np.exp(-0.5 * q) @ (weights / (2.0 * math.pi * np.sqrt(det)))
    a, b, dd = t_scale[0, 0], t_scale[0, 1], t_scale[1, 1]
    tdet = a * dd - b * b
    tconst = (math.lgamma(0.5 * (t_df + 2.0)) - math.lgamma(0.5 * t_df)
              - math.log(t_df) - _LOG_PI - 0.5 * math.log(tdet))
    d0 = z[:, 0] - t_loc[0]
    d1 = z[:, 1] - t_loc[1]
    q = (dd * d0 * d0 - 2.0 * b * d0 * d1 + a * d1 * d1) / tdet
    out += w_new * np.exp(tconst - 0.5 * (t_df + 2.0) * np.log1p(q / t_df))
    return out


def _log_bf_counts(table, alpha, total_rule):
    kx, ky = table.shape
    if kx == 1 or ky == 1:
        # every Gamma ratio cancels against a margin term
        return 0.0
    n = table.sum()
    if total_rule:
        cell = alpha / (kx * ky)
        a = alpha
    else:
        cell = alpha
        a = alpha * kx * ky
    ar = cell * ky
    ac = cell * kx
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    m = table[table > 0]
    return (gammaln(a) - gammaln(a + n)
            + np.sum(gammaln(ar + rows)) - kx * gammaln(ar)
            + np.sum(gammaln(ac + cols)) - ky * gammaln(ac)
            + m.size * gammaln(cell) - np.sum(gammaln(cell + m)))


def trace_log_bf(lx, ly, alpha, total_rule):
    S = lx.shape[0]
    out = np.empty(S)
    for s in range(S):
        _, cx = np.unique(lx[s], return_inverse=True)
        _, cy = np.unique(ly[s], return_inverse=True)
        kx = cx.max() + 1
        ky = cy.max() + 1
        table = np.bincount(cx * ky + cy, minlength=kx * ky).reshape(kx, ky)
        out[s] = _log_bf_counts(table, alpha, total_rule)
    return out


def knn_counts(x, y, k, chunk=512):
    n = x.shape[0]
    nx = np.empty(n, np.int64)
    ny = np.empty(n, np.int64)
    eps = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.abs(x[start:stop, None] - x[None, :])
        dy = np.abs(y[start:stop, None] - y[None, :])
        dist = np.maximum(dx, dy)
        rows = np.arange(stop - start)
        dist[rows, rows + start] = np.inf
        e = np.partition(dist, k - 1, axis=1)[:, k - 1]
        eps[start:stop] = e
        # the diagonal of dx/dy is 0 and counted below whenever e > 0
        self_hit = (e > 0).astype(np.int64)
        nx[start:stop] = (dx < e[:, None]).sum(axis=1) - self_hit
        ny[start:stop] = (dy < e[:, None]).sum(axis=1) - self_hit
    return nx, ny, eps
