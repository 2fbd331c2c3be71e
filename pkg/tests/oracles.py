"""Independent reference computations shared by the unit and acceptance
tests.  Nothing here imports the package."""

import itertools
import math

import numpy as np


def set_partitions(n):
    """All set partitions of range(n) as canonical label tuples."""
    def rec(i, labels, k):
        if i == n:
            yield tuple(labels)
            return
        for lab in range(k + 1):
            yield from rec(i + 1, labels + [lab], max(k, lab + 1))
    yield from rec(0, [], 0)


def log_nig_marginal(x, mu0, k0, a0, b0):
    """Log marginal likelihood of ``x`` under N(mu, s2), mu ~ N(mu0, s2/k0),
    s2 ~ InvGamma(a0, b0)."""
    x = np.asarray(x, float)
    n = x.size
    kn = k0 + n
    xbar = x.mean()
    an = a0 + n / 2
    bn = (b0 + 0.5 * np.sum((x - xbar) ** 2)
          + k0 * n * (xbar - mu0) ** 2 / (2 * kn))
    return (math.lgamma(an) - math.lgamma(a0) + a0 * math.log(b0)
            - an * math.log(bn) + 0.5 * math.log(k0 / kn)
            - 0.5 * n * math.log(2 * math.pi))


def partition_posterior(x, c, mu0, k0, nu, psi):
    """Exact posterior over set partitions for a DP mixture of normals with
    fixed hyperparameters (cluster variance prior InvGamma(nu/2, psi/2))."""
    x = np.asarray(x, float)
    n = x.size
    parts = list(set_partitions(n))
    logp = []
    for part in parts:
        lab = np.array(part)
        K = lab.max() + 1
        lp = K * math.log(c) - sum(math.log(c + i) for i in range(n))
        for k in range(K):
            members = x[lab == k]
            lp += math.lgamma(members.size)
            lp += log_nig_marginal(members, mu0, k0, nu / 2, psi / 2)
        logp.append(lp)
    logp = np.array(logp)
    p = np.exp(logp - logp.max())
    return parts, p / p.sum()


def coclustering_probs(parts, probs):
    """P(i and j share a cluster) for every pair i < j."""
    n = len(parts[0])
    out = {}
    for i, j in itertools.combinations(range(n), 2):
        out[i, j] = sum(p for part, p in zip(parts, probs)
                        if part[i] == part[j])
    return out


def batch_se(indicator, n_batches=50):
    """Monte Carlo standard error of a chain average by batch means."""
    b = np.array_split(np.asarray(indicator, float), n_batches)
    means = np.array([v.mean() for v in b])
    return means.std(ddof=1) / math.sqrt(n_batches)


def log_dirichlet_multinomial(counts, alpha):
    """Log probability of a specific sequence with the given category
    counts under a symmetric-or-not Dirichlet(alpha) prior."""
    counts = np.asarray(counts, float).ravel()
    alpha = np.broadcast_to(np.asarray(alpha, float).ravel(), counts.shape)
    return (math.lgamma(alpha.sum()) - math.lgamma(alpha.sum() + counts.sum())
            + sum(math.lgamma(a + m) - math.lgamma(a)
                  for a, m in zip(alpha, counts)))


def log_bf_oracle(table, cell_alpha):
    """log P(table | independent margins) - log P(table | joint cells).

    The joint model puts Dirichlet(cell_alpha) on all cells; the margins get
    Dirichlet priors whose parameters are the summed cell parameters."""
    t = np.asarray(table, float)
    alpha = np.full(t.shape, float(cell_alpha))
    m1 = log_dirichlet_multinomial(t, alpha)
    m0 = (log_dirichlet_multinomial(t.sum(axis=1), alpha.sum(axis=1))
          + log_dirichlet_multinomial(t.sum(axis=0), alpha.sum(axis=0)))
    return m0 - m1


def gaussian_mi(rho):
    return -0.5 * math.log(1 - rho ** 2)
