"""Dirichlet process mixtures of Gaussians fitted by Gibbs sampling.

The base measure is Normal-Inverse-Wishart,

    mu_k | Sigma_k ~ N(mu0, Sigma_k / k0),   Sigma_k ~ IW(nu, Psi)

(for d=1 the inverse-Wishart is InverseGamma(nu/2, psi/2)).  Hyperpriors:
mu0 ~ N(m, s I), k0 ~ Gamma(shape, rate), Psi ~ Wishart(dof, scale I) (for
d=1, Gamma(dof/2, 1/(2 scale))), and optionally c ~ Gamma(shape, rate).

Each sweep
  1. reallocates every point with the random measure and the cluster
     parameters integrated out (Student-t predictive weights),
  2. redraws cluster parameters from their conjugate posteriors,
  3. updates mu0, k0 and Psi from their conjugate conditionals,
  4. updates c by the Escobar-West auxiliary-variable step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .stats import DomainError, RngStream, logpdf_student_t

VAR_FLOOR = 1e-10

__all__ = [
    "ChainError",
    "DpmConfig",
    "McmcSettings",
    "DpmState",
    "AllocationTrace",
    "PredictivePoints",
    "ctbf_marginal_config",
    "mixmod_config",
    "canonicalize_labels",
    "urn_weights",
    "polya_urn_weights",
    "init_state",
    "gibbs_sweep",
    "run_chain",
    "as_generator",
]


class ChainError(RuntimeError):
    """Numerical failure inside a Gibbs iteration."""

    def __init__(self, message, cluster=None, iteration=None):
        super().__init__(message)
        self.cluster = cluster
        self.iteration = iteration


@dataclass(frozen=True)
class DpmConfig:
    """Prior specification for one DPM fit.

    ``c``, ``mu0``, ``k0`` and ``psi`` are starting values; each is held
    fixed when its prior is ``None``.  ``psi`` is a scalar multiple of the
    identity.  For ``dim == 1`` the cluster variance prior is
    InverseGamma(nu/2 + shape_offset, psi/2).
    """

    dim: int = 1
    c: float = 10.0
    c_prior: tuple | None = None
    mu0: float = 0.0
    mu0_prior_mean: float = 0.0
    mu0_prior_var: float | None = 1.0
    k0: float = 0.01
    k0_prior: tuple | None = (0.5, 50.0)
    nu: float = 3.0
    shape_offset: float = -1.0
    psi: float = 0.1
    psi_prior: tuple | None = (1.0, 0.1)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError("dim must be 1 or 2")
        if not self.c > 0:
            raise DomainError("concentration c must be positive")
        for name in ("c_prior", "k0_prior", "psi_prior"):
            val = getattr(self, name)
            if val is not None:
                if len(val) != 2 or not (val[0] > 0 and val[1] > 0):
                    raise DomainError("%s must be two positive numbers" % name)
                object.__setattr__(self, name, (float(val[0]), float(val[1])))
        if self.mu0_prior_var is not None and not self.mu0_prior_var > 0:
            raise DomainError("mu0_prior_var must be positive")
        if not self.k0 > 0 or not self.psi > 0:
            raise DomainError("k0 and psi must be positive")
        if self.dim == 2 and self.shape_offset != 0:
            raise DomainError("shape_offset only applies to dim == 1")
        if not self.nu_eff > self.dim - 1:
            raise DomainError("inverse-Wishart degrees of freedom must exceed "
                              "dim - 1 (got %g)" % self.nu_eff)
        if self.psi_prior is not None and self.psi_prior[0] <= self.dim - 1:
            raise DomainError("Wishart hyperprior dof must exceed dim - 1")

    @property
    def nu_eff(self):
        """Degrees of freedom of the inverse-Wishart on cluster covariances."""
        return self.nu + 2.0 * self.shape_offset if self.dim == 1 else self.nu

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("c_prior", "k0_prior", "psi_prior"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def ctbf_marginal_config(**overrides):
    """Univariate prior used by the contingency-table test.

    c = 10 fixed, mu0 ~ N(0, 1), k0 ~ Ga(1/2, 50), nu = 3 with variance
    prior IGa(nu/2 - 1, psi/2), psi ~ Ga(1/2, 5).
    """
    return replace(DpmConfig(), **overrides)


def mixmod_config(dim, **overrides):
    """Prior for the ensemble test: c ~ Ga(1, 1), mu0 ~ N(0, 100 I),
    k0 ~ Ga(1/2, 50), nu = dim + 2, Psi ~ Wishart(nu, 0.1 I)."""
    nu = dim + 2.0
    cfg = DpmConfig(dim=dim, c=1.0, c_prior=(1.0, 1.0), mu0_prior_var=100.0,
                    k0=0.01, k0_prior=(0.5, 50.0), nu=nu, shape_offset=0.0,
                    psi=0.1 * nu, psi_prior=(nu, 0.1))
    return replace(cfg, **overrides)


@dataclass(frozen=True)
class McmcSettings:
    """Burn-in, number of stored states and thinning interval."""

    n_burn: int = 1000
    n_save: int = 1800
    thin: int = 5

    def __post_init__(self):
        if self.n_burn < 0 or self.thin < 1 or self.n_save < 0:
            raise DomainError("invalid MCMC settings")

    @property
    def total(self):
        return self.n_burn + self.n_save * self.thin


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class DpmState:
    """Current Gibbs state.  Labels are 0-based and ordered by first
    appearance; cluster parameters are stored per cluster."""

    labels: np.ndarray
    counts: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    mu0: np.ndarray | float
    k0: float
    psi: np.ndarray | float
    c: float
    iteration: int = 0
    warnings: list = field(default_factory=list)

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def n_clusters(self):
        return self.counts.shape[0]

    def copy(self):
        return DpmState(
            self.labels.copy(), self.counts.copy(), self.s1.copy(),
            self.s2.copy(), self.means.copy(), self.covs.copy(),
            np.copy(self.mu0) if self.mu0 is not None else None, self.k0,
            np.copy(self.psi), self.c, self.iteration, list(self.warnings))


def as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _prepare_data(data, dim):
    x = np.ascontiguousarray(data, dtype=float)
    if dim == 1:
        x = x.reshape(-1)
    elif x.ndim != 2 or x.shape[1] != 2:
        raise DomainError("bivariate data must have shape (n, 2)")
    if not np.all(np.isfinite(x)):
        raise DomainError("data must be finite")
    return x


def _stats(x, labels, K, dim):
    counts = np.bincount(labels, minlength=K).astype(np.int64)
    if dim == 1:
        s1 = np.bincount(labels, weights=x, minlength=K)
        s2 = np.bincount(labels, weights=x * x, minlength=K)
    else:
        s1 = np.stack([np.bincount(labels, weights=x[:, j], minlength=K)
                       for j in range(2)], axis=1)
        s2 = np.stack([np.bincount(labels, weights=w, minlength=K) for w in
                       (x[:, 0] ** 2, x[:, 0] * x[:, 1], x[:, 1] ** 2)],
                      axis=1)
    return counts, s1, s2


def init_state(data, config: DpmConfig, rng=None, labels=None):
    """Starting state: one cluster (or the given labels) with parameters
    drawn from their posterior."""
    x = _prepare_data(data, config.dim)
    n = x.shape[0]
    if labels is None:
        labels = np.zeros(n, np.int64)
    else:
        labels = canonicalize_labels(np.asarray(labels) + 1) - 1
    K = int(labels.max()) + 1 if n else 0
    counts, s1, s2 = _stats(x, labels, K, config.dim)
    if config.dim == 1:
        mu0 = float(config.mu0)
        psi = float(config.psi)
    else:
        mu0 = np.full(2, float(config.mu0))
        psi = float(config.psi) * np.eye(2)
    state = DpmState(labels, counts, s1, s2, np.zeros((0,)), np.zeros((0,)),
                     mu0, float(config.k0), psi, float(config.c))
    if n >= 2 and np.ptp(x, axis=0).max() == 0:
        state.warnings.append("degenerate data: all points identical")
    _draw_cluster_params(state, config, as_generator(rng))
    return state


# ---------------------------------------------------------------------------
# conditional updates
# ---------------------------------------------------------------------------

def _posterior_niw(state, config):
    """Posterior NIW parameters of every cluster: (mun, kn, nun, psin)."""
    cnt = state.counts.astype(float)
    kn = state.k0 + cnt
    nun = config.nu_eff + cnt
    if config.dim == 1:
        xbar = state.s1 / cnt
        ss = np.maximum(state.s2 - state.s1 * xbar, 0.0)
        d = xbar - state.mu0
        psin = state.psi + ss + state.k0 * cnt / kn * d * d
        mun = (state.k0 * state.mu0 + state.s1) / kn
        return mun, kn, nun, psin
    xbar = state.s1 / cnt[:, None]
    outer = np.empty((cnt.size, 2, 2))
    outer[:, 0, 0] = state.s2[:, 0]
    outer[:, 0, 1] = outer[:, 1, 0] = state.s2[:, 1]
    outer[:, 1, 1] = state.s2[:, 2]
    scatter = outer - cnt[:, None, None] * xbar[:, :, None] * xbar[:, None, :]
    d = xbar - state.mu0
    f = (state.k0 * cnt / kn)[:, None, None]
    psin = state.psi + scatter + f * d[:, :, None] * d[:, None, :]
    psin = 0.5 * (psin + np.swapaxes(psin, 1, 2))
    mun = (state.k0 * state.mu0 + state.s1) / kn[:, None]
    return mun, kn, nun, psin


def _draw_cluster_params(state, config, rng):
    K = state.n_clusters
    if K == 0:
        if config.dim == 1:
            state.means, state.covs = np.zeros(0), np.zeros(0)
        else:
            state.means, state.covs = np.zeros((0, 2)), np.zeros((0, 2, 2))
        return
    mun, kn, nun, psin = _posterior_niw(state, config)
    if config.dim == 1:
        var = 0.5 * psin / rng.gamma(0.5 * nun)
        var = np.maximum(var, VAR_FLOOR)
        state.covs = var
        state.means = mun + np.sqrt(var / kn) * rng.standard_normal(K)
        return
    nonpd = (psin[:, 0, 0] <= 0) | (_det2(psin) <= 0)
    if np.any(nonpd):
        psin[nonpd] += VAR_FLOOR * np.eye(2)
        nonpd = (psin[:, 0, 0] <= 0) | (_det2(psin) <= 0)
        if np.any(nonpd):
            raise ChainError("posterior scale not positive definite",
                             cluster=int(np.flatnonzero(nonpd)[0]),
                             iteration=state.iteration)
    covs = _floor_eig2(_inv2(_wishart2(nun, _inv2(psin), rng)))
    fac = _chol2(covs / kn[:, None, None])
    z = rng.standard_normal((K, 2))
    state.covs = covs
    state.means = mun + np.einsum("kij,kj->ki", fac, z)


def _floor_eig2(m):
    """Shift symmetric 2x2 matrices so the smaller eigenvalue is at least
    VAR_FLOOR; non-finite entries (a singular draw) become the floor."""
    m = np.where(np.isfinite(m), m, 0.0)
    half_tr = 0.5 * (m[:, 0, 0] + m[:, 1, 1])
    rad = np.hypot(0.5 * (m[:, 0, 0] - m[:, 1, 1]), m[:, 0, 1])
    lo = half_tr - rad
    shift = np.where(lo < VAR_FLOOR, VAR_FLOOR - lo, 0.0)
    out = m.copy()
    out[:, 0, 0] += shift
    out[:, 1, 1] += shift
    return out


def _det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _inv2(m):
    """Inverse of a stack of symmetric 2x2 matrices."""
    det = _det2(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] / det
    out[..., 1, 1] = m[..., 0, 0] / det
    out[..., 0, 1] = out[..., 1, 0] = -m[..., 0, 1] / det
    return out


def _chol2(m):
    """Lower Cholesky factor of a stack of 2x2 positive definite matrices."""
    out = np.zeros_like(m)
    l00 = np.sqrt(m[..., 0, 0])
    l10 = m[..., 1, 0] / l00
    out[..., 0, 0] = l00
    out[..., 1, 0] = l10
    out[..., 1, 1] = np.sqrt(np.maximum(m[..., 1, 1] - l10 * l10, 0.0))
    return out


def _wishart2(df, scale, rng):
    """Bartlett draws from Wishart(df, scale) for a stack of 2x2 scales."""
    batch = scale.shape[:-2]
    df = np.broadcast_to(df, batch)
    a00 = np.sqrt(rng.chisquare(df))
    a11 = np.sqrt(rng.chisquare(df - 1.0))
    a10 = rng.standard_normal(batch)
    lo = _chol2(scale)
    # L @ A with both factors lower triangular
    b00 = lo[..., 0, 0] * a00
    b10 = lo[..., 1, 0] * a00 + lo[..., 1, 1] * a10
    b11 = lo[..., 1, 1] * a11
    out = np.empty(batch + (2, 2))
    out[..., 0, 0] = b00 * b00
    out[..., 0, 1] = out[..., 1, 0] = b00 * b10
    out[..., 1, 1] = b10 * b10 + b11 * b11
    return out


def _update_hyper(state, config, rng):
    K = state.n_clusters
    if K == 0:
        return
    if config.dim == 1:
        prec = 1.0 / state.covs
        if config.mu0_prior_var is not None:
            s = config.mu0_prior_var
            P = 1.0 / s + state.k0 * prec.sum()
            b = config.mu0_prior_mean / s + state.k0 * (prec * state.means).sum()
            state.mu0 = b / P + rng.standard_normal() / math.sqrt(P)
        if config.k0_prior is not None:
            shape, rate = config.k0_prior
            q = np.sum(prec * (state.means - state.mu0) ** 2)
            state.k0 = rng.gamma(shape + 0.5 * K) / (rate + 0.5 * q)
        if config.psi_prior is not None:
            dof, scale = config.psi_prior
            state.psi = rng.gamma(0.5 * dof + 0.5 * K * config.nu_eff) / (
                0.5 / scale + 0.5 * prec.sum())
        return
    prec = _inv2(state.covs)
    if config.mu0_prior_var is not None:
        s = config.mu0_prior_var
        P = np.eye(2) / s + state.k0 * prec.sum(axis=0)
        b = config.mu0_prior_mean / s + state.k0 * np.einsum(
            "kij,kj->i", prec, state.means)
        cov = _inv2(P)
        state.mu0 = cov @ b + _chol2(cov) @ rng.standard_normal(2)
    if config.k0_prior is not None:
        shape, rate = config.k0_prior
        d = state.means - state.mu0
        q = np.einsum("ki,kij,kj->", d, prec, d)
        state.k0 = rng.gamma(shape + K) / (rate + 0.5 * q)
    if config.psi_prior is not None:
        dof, scale = config.psi_prior
        post = _inv2(np.eye(2) / scale + prec.sum(axis=0))
        state.psi = _wishart2(dof + K * config.nu_eff, post, rng)


def _update_concentration(state, config, rng):
    if config.c_prior is None or state.n == 0:
        return
    a, b = config.c_prior
    n = state.n
    K = state.n_clusters
    eta = rng.beta(state.c + 1.0, n)
    rate = b - math.log(eta)
    odds = (a + K - 1.0) / (n * rate)
    shape = a + K if rng.random() < odds / (1.0 + odds) else a + K - 1.0
    state.c = rng.gamma(shape) / rate


def _sweep(state, x, config, rng):
    n = state.n
    if n:
        u = rng.random(n)
        order = np.arange(n)
        if config.dim == 1:
            labels, counts, s1, s2 = kernels.alloc_sweep_1d(
                x, state.labels, u, order, float(state.mu0), float(state.k0),
                float(config.nu_eff), float(state.psi), float(state.c))
        else:
            labels, counts, s1, s2 = kernels.alloc_sweep_2d(
                x, state.labels, u, order, np.asarray(state.mu0, dtype=float),
                float(state.k0), float(config.nu_eff),
                np.asarray(state.psi, dtype=float), float(state.c))
        state.labels, state.counts, state.s1, state.s2 = (labels, counts, s1,
                                                          s2)
    _draw_cluster_params(state, config, rng)
    _update_hyper(state, config, rng)
    _update_concentration(state, config, rng)
    state.iteration += 1
    return state


def gibbs_sweep(state: DpmState, data, config: DpmConfig, rng) -> DpmState:
    """One full Gibbs sweep; returns a new state and leaves ``state`` alone."""
    x = _prepare_data(data, config.dim)
    if x.shape[0] != state.n:
        raise DomainError("data length does not match the state")
    new = state.copy()
    try:
        return _sweep(new, x, config, as_generator(rng))
    except FloatingPointError as exc:  # pragma: no cover
        raise ChainError(str(exc), iteration=state.iteration) from exc


# ---------------------------------------------------------------------------
# Polya urn
# ---------------------------------------------------------------------------

def urn_weights(counts, c, log_pred=None, log_pred_new=0.0):
    """Normalised Polya-urn weights over existing clusters plus a new one.

    Without predictive terms this is the bare urn: ``n_k / (n + c)`` and
    ``c / (n + c)``.
    """
    counts = np.asarray(counts, dtype=float)
    logw = np.log(counts) if counts.size else np.zeros(0)
    if log_pred is not None:
        logw = logw + np.asarray(log_pred, dtype=float)
    logw = np.append(logw, math.log(c) + log_pred_new)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _predictive_params(cnt, s1, s2, mu0, k0, nu, psi, dim):
    kn = k0 + cnt
    nun = nu + cnt
    if dim == 1:
        if cnt:
            xbar = s1 / cnt
            ss = max(s2 - s1 * xbar, 0.0)
            psin = psi + ss + k0 * cnt / kn * (xbar - mu0) ** 2
        else:
            psin = psi
        df = nun
        return df, (k0 * mu0 + s1) / kn, max(psin * (kn + 1) / (kn * df),
                                             VAR_FLOOR)
    psin = np.array(psi, dtype=float)
    if cnt:
        xbar = s1 / cnt
        outer = np.array([[s2[0], s2[1]], [s2[1], s2[2]]])
        d = xbar - mu0
        psin = psin + outer - cnt * np.outer(xbar, xbar) + \
            k0 * cnt / kn * np.outer(d, d)
    df = nun - 1.0
    return df, (k0 * np.asarray(mu0) + s1) / kn, psin * (kn + 1) / (kn * df)


def polya_urn_weights(state: DpmState, data, config: DpmConfig, index):
    """Allocation probabilities for point ``index`` given all other points.

    Returns weights over the clusters that remain non-empty once the point
    is removed (in label order) followed by the weight of a new cluster.
    """
    x = _prepare_data(data, config.dim)
    labels = state.labels.copy()
    keep = np.ones(state.n, bool)
    keep[index] = False
    xi = x[index]
    others = np.unique(labels[keep])
    logp = []
    counts = []
    for k in others:
        members = x[keep & (labels == k)]
        cnt = members.shape[0]
        if config.dim == 1:
            s1, s2 = members.sum(), (members ** 2).sum()
        else:
            s1 = members.sum(axis=0)
            s2 = np.array([(members[:, 0] ** 2).sum(),
                           (members[:, 0] * members[:, 1]).sum(),
                           (members[:, 1] ** 2).sum()])
        df, loc, scale = _predictive_params(cnt, s1, s2, state.mu0, state.k0,
                                            config.nu_eff, state.psi,
                                            config.dim)
        logp.append(float(logpdf_student_t(xi, df, loc, scale)))
        counts.append(cnt)
    zero = 0.0 if config.dim == 1 else np.zeros(2)
    zero2 = 0.0 if config.dim == 1 else np.zeros(3)
    df, loc, scale = _predictive_params(0, zero, zero2, state.mu0, state.k0,
                                        config.nu_eff, state.psi, config.dim)
    lnew = float(logpdf_student_t(xi, df, loc, scale))
    return urn_weights(counts, state.c, logp, lnew)


# ---------------------------------------------------------------------------
# traces and chains
# ---------------------------------------------------------------------------

def canonicalize_labels(labels):
    """Renumber labels 1..K in order of first appearance."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    uniq, first, inverse = np.unique(labels, return_index=True,
                                     return_inverse=True)
    rank = np.empty(uniq.size, np.int64)
    rank[np.argsort(first)] = np.arange(1, uniq.size + 1)
    return rank[inverse.reshape(-1)].reshape(labels.shape)


@dataclass(frozen=True)
class AllocationTrace:
    """Saved cluster labels, one row per stored iteration (labels 1..K)."""

    labels: np.ndarray
    n_clusters: np.ndarray
    mcmc: McmcSettings
    warnings: tuple = ()

    @property
    def n_saved(self):
        return self.labels.shape[0]

    @property
    def n(self):
        return self.labels.shape[1]

    def restrict(self, index):
        """Columns ``index`` only, relabelled 1..K within every iteration."""
        sub = self.labels[:, index]
        out = np.empty(sub.shape, np.int32)
        for s in range(sub.shape[0]):
            out[s] = canonicalize_labels(sub[s])
        k = out.max(axis=1) if out.shape[1] else np.zeros(out.shape[0], int)
        return AllocationTrace(out, k.astype(np.int64), self.mcmc,
                               self.warnings)

    def dump(self, path, header=None):
        """Tab-separated dump; ``#`` header lines hold ``key=value`` pairs."""
        with open(path, "w", encoding="utf-8") as fh:
            meta = dict(header or {})
            meta.update(n_burn=self.mcmc.n_burn, n_save=self.mcmc.n_save,
                        thin=self.mcmc.thin)
            for key, val in meta.items():
                fh.write("# %s=%s\n" % (key, val))
            for row in self.labels:
                fh.write("\t".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    meta[key] = val
                elif line.strip():
                    rows.append([int(v) for v in line.rstrip("\n").split("\t")])
        labels = np.array(rows, dtype=np.int32).reshape(len(rows), -1)
        mcmc = McmcSettings(int(meta.get("n_burn", 0)),
                            int(meta.get("n_save", len(rows))),
                            int(meta.get("thin", 1)))
        k = labels.max(axis=1) if labels.size else np.zeros(len(rows), int)
        return cls(labels, k.astype(np.int64), mcmc), meta


@dataclass(frozen=True)
class PredictivePoints:
    """Posterior predictive density averaged over the stored iterations."""

    points: np.ndarray
    density: np.ndarray


def _prior_t(state, config):
    if config.dim == 1:
        df = config.nu_eff
        return df, float(state.mu0), float(
            state.psi) * (state.k0 + 1.0) / (state.k0 * df)
    df = config.nu_eff - 1.0
    return df, np.asarray(state.mu0, float), np.asarray(
        state.psi, float) * (state.k0 + 1.0) / (state.k0 * df)


def _accumulate_density(state, config, z, out):
    n = state.n
    w = state.counts / (state.c + n)
    w_new = state.c / (state.c + n)
    df, loc, scale = _prior_t(state, config)
    if config.dim == 1:
        kernels.mixture_density_1d(z, w, state.means, state.covs, w_new,
                                   float(df), float(loc), float(scale), out)
    else:
        kernels.mixture_density_2d(z, w, state.means, state.covs, w_new,
                                   float(df), loc, scale, out)


def run_chain(data, config: DpmConfig, mcmc: McmcSettings = McmcSettings(),
              eval_points=None, rng=None, state=None):
    """Run a chain and return ``(AllocationTrace, PredictivePoints)``.

    ``mcmc.n_burn`` sweeps are discarded, then every ``thin``-th sweep is
    stored until ``n_save`` states are kept.  The predictive density at
    ``eval_points`` is averaged over the stored states.
    """
    if mcmc.n_save <= 0:
        raise DomainError("no saved iterations")
    x = _prepare_data(data, config.dim)
    gen = as_generator(rng)
    if state is None:
        state = init_state(x, config, gen)
    else:
        state = state.copy()
    n = state.n
    if eval_points is None:
        z = np.zeros((0,) if config.dim == 1 else (0, 2))
    else:
        z = _prepare_data(eval_points, config.dim)
    dens = np.zeros(z.shape[0])
    dtype = np.int16 if n < 2 ** 15 else np.int32
    saved = np.zeros((mcmc.n_save, n), dtype)
    ks = np.zeros(mcmc.n_save, np.int64)
    s = 0
    with np.errstate(over="ignore", under="ignore"):
        for it in range(mcmc.total):
            try:
                _sweep(state, x, config, gen)
            except ChainError as exc:
                exc.iteration = it
                raise
            if it >= mcmc.n_burn and (it - mcmc.n_burn + 1) % mcmc.thin == 0:
                saved[s] = state.labels + 1
                ks[s] = state.n_clusters
                if z.shape[0]:
                    _accumulate_density(state, config, z, dens)
                s += 1
    dens /= mcmc.n_save
    if not np.all(np.isfinite(dens)):
        raise ChainError("non-finite predictive density")
    if state.warnings:
        for msg in state.warnings:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    trace = AllocationTrace(saved, ks, mcmc, tuple(state.warnings))
    return trace, PredictivePoints(z, dens)
