"""k-nearest-neighbour mutual information (Kraskov-Stoegbauer-Grassberger).

Both inputs are standardized, distances in the joint space use the
max-norm, and the estimate is returned in nats.  Sums are taken with
``math.fsum`` so the result does not depend on the order of the rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from . import kernels
from .dpm import as_generator
from .stats import DomainError

__all__ = ["MiConfig", "MiResult", "knn_mi", "knn_mi_result",
           "permutation_threshold"]


@dataclass(frozen=True)
class MiConfig:
    """``k`` neighbours; ``variant`` 1 (counting) or 2 (rectangle) estimator."""

    k: int = 20
    variant: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("k must be a positive integer")
        if self.variant not in (1, 2):
            raise DomainError("variant must be 1 or 2")


@dataclass(frozen=True)
class MiResult:
    mi: float
    jittered: bool


def _standardize(v):
    v = np.asarray(v, dtype=float)
    n = v.size
    mean = math.fsum(v) / n
    c = v - mean
    sd = math.sqrt(math.fsum(c * c) / (n - 1)) if n > 1 else 0.0
    return c / sd if sd > 0 else c


def _ksg2_counts(x, y, k, chunk=512):
    n = x.shape[0]
    nx = np.empty(n, np.int64)
    ny = np.empty(n, np.int64)
    zero = False
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.abs(x[start:stop, None] - x[None, :])
        dy = np.abs(y[start:stop, None] - y[None, :])
        dist = np.maximum(dx, dy)
        rows = np.arange(stop - start)
        dist[rows, rows + start] = np.inf
        nbr = np.argpartition(dist, k - 1, axis=1)[:, :k]
        ex = np.take_along_axis(dx, nbr, axis=1).max(axis=1)
        ey = np.take_along_axis(dy, nbr, axis=1).max(axis=1)
        zero |= bool(np.any(ex == 0) or np.any(ey == 0))
        nx[start:stop] = (dx <= ex[:, None]).sum(axis=1) - 1
        ny[start:stop] = (dy <= ey[:, None]).sum(axis=1) - 1
    return nx, ny, zero


def knn_mi_result(x, y, config=MiConfig(), rng=None) -> MiResult:
    """Estimate with a flag telling whether tie-breaking jitter was added.

    Jitter of size 1e-10 (in standardized units) is added when some point
    has a zero neighbour distance; ``rng`` seeds it (default seed 0).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.size
    if y.size != n:
        raise DomainError("x and y must have equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("observations must be finite")
    k = int(config.k)
    if not k < n:
        raise DomainError("need more than k=%d observations" % k)
    xs, ys = _standardize(x), _standardize(y)
    jittered = False
    for attempt in range(2):
        if config.variant == 1:
            nx, ny, eps = kernels.knn_counts(xs, ys, k)
            zero = bool(np.any(eps == 0))
        else:
            nx, ny, zero = _ksg2_counts(xs, ys, k)
        if not zero or attempt == 1:
            break
        gen = as_generator(0 if rng is None else rng)
        xs = xs + 1e-10 * gen.standard_normal(n)
        ys = ys + 1e-10 * gen.standard_normal(n)
        jittered = True
    if config.variant == 1:
        terms = digamma(nx + 1.0) + digamma(ny + 1.0)
        mi = digamma(k) + digamma(n) - math.fsum(terms) / n
    else:
        terms = digamma(np.maximum(nx, 1)) + digamma(np.maximum(ny, 1))
        mi = digamma(k) - 1.0 / k + digamma(n) - math.fsum(terms) / n
    return MiResult(float(mi), jittered)


def knn_mi(x, y, config=MiConfig(), rng=None) -> float:
    """Mutual information estimate in nats."""
    return knn_mi_result(x, y, config, rng).mi


def permutation_threshold(x, y, config=MiConfig(), n_perm=100, level=0.05,
                          rng=None):
    """(1 - level) quantile of the estimate over index-permuted copies of y."""
    if n_perm < 20:
        raise DomainError("n_perm must be at least 20")
    if not 0 <= level <= 1:
        raise DomainError("level must be in [0, 1]")
    gen = as_generator(rng)
    y = np.asarray(y, dtype=float)
    vals = np.array([knn_mi(x, y[gen.permutation(y.size)], config)
                     for _ in range(n_perm)])
    return float(np.quantile(vals, 1.0 - level))
