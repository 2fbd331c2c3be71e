"""Contingency-table Bayes factor test of independence.

Two univariate DPM fits induce, at every stored Gibbs iteration, a pair of
partitions of the same rows.  Cross-tabulating them gives a K_X x K_Y table.
With Dirichlet priors on the cell probabilities the marginal likelihoods of

* M1 (dependence): table ~ Multinomial(p),          p ~ Dir(alpha_kl)
* M0 (independence): table ~ Multinomial(p_X p_Y'), p_X ~ Dir(alpha_k.),
  p_Y ~ Dir(alpha_.l)

are available in closed form, so BF = P(table | M0) / P(table | M1) and the
posterior probability of dependence under even prior odds is 1 / (1 + BF).
The reported statistic averages that probability over the stored
iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln
from scipy.stats import chi2

from . import kernels
from .dpm import AllocationTrace, canonicalize_labels
from .stats import DomainError

__all__ = [
    "ContingencyTable",
    "CtbfConfig",
    "CtbfResult",
    "ChiSquareResult",
    "build_table",
    "log_bf",
    "log_marginal_m0",
    "log_marginal_m1",
    "posterior_prob_dep",
    "p_dep_over_trace",
    "chi_square",
    "coclustering_matrix",
    "dahl_partition",
    "p_dep_single_partition",
]


@dataclass(frozen=True)
class ContingencyTable:
    """Counts m_kl with their row and column margins."""

    counts: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.counts)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DomainError("table must be a non-empty 2-d array")
        if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(
                m != np.round(m)):
            raise DomainError("table counts must be non-negative integers")
        m = m.astype(np.int64)
        m.setflags(write=False)
        object.__setattr__(self, "counts", m)

    @property
    def shape(self):
        return self.counts.shape

    @property
    def rows(self):
        return self.counts.sum(axis=1)

    @property
    def cols(self):
        return self.counts.sum(axis=0)

    @property
    def n(self):
        return int(self.counts.sum())

    def drop_empty(self):
        """Remove empty rows and columns; returns ``(table, dropped)``."""
        r = self.rows > 0
        c = self.cols > 0
        if r.all() and c.all():
            return self, False
        if not r.any():
            return ContingencyTable(np.zeros((1, 1), np.int64)), True
        return ContingencyTable(self.counts[r][:, c]), True


@dataclass(frozen=True)
class CtbfConfig:
    """Cell prior.

    ``rule="constant"`` sets every alpha_kl to ``alpha`` (total mass
    ``alpha * K_X * K_Y``, so it changes with the table size);
    ``rule="total"`` spreads a fixed total mass ``a`` evenly over the cells.
    """

    rule: str = "constant"
    alpha: float = 0.5
    a: float = 1.0

    def __post_init__(self):
        if self.rule not in ("constant", "total"):
            raise DomainError("cell-prior rule must be 'constant' or 'total'")
        if not (self.alpha > 0 and self.a > 0):
            raise DomainError("cell prior mass must be positive")

    def cell_prior(self, kx, ky):
        """``(alpha_kl, alpha_k., alpha_.l, a)`` for a kx x ky table."""
        cell = self.alpha if self.rule == "constant" else self.a / (kx * ky)
        return cell, cell * ky, cell * kx, cell * kx * ky

    @property
    def kernel_args(self):
        if self.rule == "constant":
            return float(self.alpha), False
        return float(self.a), True


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    dof: int
    dropped: bool = False

    def __iter__(self):
        return iter((self.statistic, self.p_value, self.dof))


@dataclass(frozen=True)
class CtbfResult:
    """Per-iteration log Bayes factors and dependence probabilities."""

    p_dep: float
    probs: np.ndarray
    log_bfs: np.ndarray
    chi2: ChiSquareResult | None = None
    flags: tuple = field(default=())

    @property
    def n_iter(self):
        return self.probs.shape[0]


def build_table(labels_x, labels_y):
    """Cross-tabulate two label vectors with labels in 1..K."""
    lx = np.asarray(labels_x)
    ly = np.asarray(labels_y)
    if lx.ndim != 1 or lx.shape != ly.shape:
        raise DomainError("label vectors must have equal length")
    if lx.size == 0:
        raise DomainError("label vectors are empty")
    if lx.min() < 1 or ly.min() < 1:
        raise DomainError("labels must be positive integers")
    kx, ky = int(lx.max()), int(ly.max())
    flat = (lx.astype(np.int64) - 1) * ky + (ly.astype(np.int64) - 1)
    return ContingencyTable(np.bincount(flat, minlength=kx * ky).reshape(kx,
                                                                         ky))


def _log_multinomial_coef(m):
    n = m.sum()
    return gammaln(n + 1.0) - gammaln(m + 1.0).sum()


def log_marginal_m1(table: ContingencyTable, config=CtbfConfig()):
    """log P(table | dependence): Dirichlet-multinomial over the cells."""
    t = table
    m = t.counts
    cell, _, _, a = config.cell_prior(*m.shape)
    return float(_log_multinomial_coef(m) + gammaln(a) - gammaln(a + t.n)
                 + np.sum(gammaln(cell + m) - gammaln(cell)))


def log_marginal_m0(table: ContingencyTable, config=CtbfConfig()):
    """log P(table | independence): product of margin Dirichlet-multinomials."""
    t = table
    m = t.counts
    _, ar, ac, a = config.cell_prior(*m.shape)
    n = t.n
    return float(_log_multinomial_coef(m)
                 + gammaln(a) - gammaln(a + n)
                 + np.sum(gammaln(ar + t.rows) - gammaln(ar))
                 + gammaln(a) - gammaln(a + n)
                 + np.sum(gammaln(ac + t.cols) - gammaln(ac)))


def log_bf(table: ContingencyTable, config=CtbfConfig()):
    """log P(table | M0) - log P(table | M1), accumulated in log space.

    The table is used as given: empty rows or columns still count towards
    the prior mass, so this is exactly the difference of the two marginals.
    """
    t = table
    kx, ky = t.shape
    if kx == 1 or ky == 1:
        return 0.0
    cell, ar, ac, a = config.cell_prior(kx, ky)
    m = t.counts
    return float(gammaln(a) - gammaln(a + t.n)
                 + np.sum(gammaln(ar + t.rows) - gammaln(ar))
                 + np.sum(gammaln(ac + t.cols) - gammaln(ac))
                 + np.sum(gammaln(cell) - gammaln(cell + m)))


def posterior_prob_dep(log_bf_value):
    """1 / (1 + exp(log_bf)) without overflow."""
    v = np.asarray(log_bf_value, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("log Bayes factor must be finite")
    out = expit(-v)
    return float(out) if out.ndim == 0 else out


def _label_matrix(trace):
    if isinstance(trace, AllocationTrace):
        return trace.labels
    lab = np.asarray(trace)
    return lab.reshape(1, -1) if lab.ndim == 1 else lab


def p_dep_over_trace(trace_x, trace_y, config=CtbfConfig(), chi2_labels=None):
    """Average posterior probability of dependence over paired iterations.

    ``trace_x`` and ``trace_y`` are :class:`AllocationTrace` objects (or
    S x n label arrays) aligned by iteration.  Labels need not be compact;
    each iteration is relabelled before tabulation.  ``chi2_labels``, an
    optional pair of single partitions, adds the chi-square statistic.
    """
    lx = _label_matrix(trace_x)
    ly = _label_matrix(trace_y)
    if lx.shape[0] == 0:
        raise DomainError("no saved iterations")
    if lx.shape != ly.shape:
        raise DomainError("traces are not aligned: %s vs %s"
                          % (lx.shape, ly.shape))
    if lx.shape[1] == 0:
        raise DomainError("traces have no rows")
    alpha, total = config.kernel_args
    lbf = kernels.trace_log_bf(np.ascontiguousarray(lx, dtype=np.int64),
                               np.ascontiguousarray(ly, dtype=np.int64),
                               alpha, total)
    probs = posterior_prob_dep(lbf)
    probs = np.atleast_1d(probs)
    res_chi = None
    if chi2_labels is not None:
        res_chi = chi_square(build_table(canonicalize_labels(chi2_labels[0]),
                                         canonicalize_labels(chi2_labels[1])))
    return CtbfResult(float(np.mean(probs)), probs, lbf, res_chi)


def chi_square(table: ContingencyTable):
    """Pearson statistic T with (K_X - 1)(K_Y - 1) degrees of freedom.

    Empty rows and columns are dropped first (``dropped`` is then True).
    A 1 x 1 table has zero degrees of freedom and p-value 1.
    """
    t, dropped = table.drop_empty()
    kx, ky = t.shape
    dof = (kx - 1) * (ky - 1)
    if dof == 0:
        return ChiSquareResult(0.0, 1.0, 0, dropped)
    expected = np.outer(t.rows, t.cols) / t.n
    stat = float(np.sum((t.counts - expected) ** 2 / expected))
    return ChiSquareResult(stat, float(chi2.sf(stat, dof)), dof, dropped)


def _cocluster_counts(lab):
    n = lab.shape[1]
    acc = np.zeros((n, n), np.int64)
    for row in lab:
        acc += row[:, None] == row[None, :]
    return acc


def coclustering_matrix(trace):
    """Fraction of stored iterations in which rows i and j share a cluster."""
    lab = _label_matrix(trace)
    return _cocluster_counts(lab) / lab.shape[0]


def dahl_partition(trace, return_index=False):
    """Stored partition closest in squared error to the co-clustering matrix.

    Scores are compared in exact integer arithmetic (scaled by S**2), so
    ties are genuine and go to the earliest iteration.
    """
    lab = _label_matrix(trace)
    S = lab.shape[0]
    if S == 0:
        raise DomainError("no saved iterations")
    acc = _cocluster_counts(lab)
    best, best_score = 0, None
    for s, row in enumerate(lab):
        same = row[:, None] == row[None, :]
        score = S * S * int(same.sum()) - 2 * S * int(acc[same].sum())
        if best_score is None or score < best_score:
            best, best_score = s, score
    labels = canonicalize_labels(lab[best])
    return (labels, best) if return_index else labels


def p_dep_single_partition(trace_x, trace_y, config=CtbfConfig()):
    """Dependence probability from the Dahl partition of each variable."""
    t = build_table(dahl_partition(trace_x), dahl_partition(trace_y))
    return posterior_prob_dep(log_bf(t, config))
