"""Special functions, seeded samplers and log densities.

Distributions use the following conventions throughout the package:

* Gamma(shape, rate)
* InverseGamma(shape, rate): density proportional to x**(-shape-1) exp(-rate/x)
* Wishart(df, scale): mean df * scale
* InverseWishart(df, scale): mean scale / (df - d - 1)

All samplers take a :class:`numpy.random.Generator`.  Reproducible,
order-independent generators come from :class:`RngStream`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "DomainError",
    "RngStream",
    "log_gamma",
    "sample_normal",
    "sample_mvnormal",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_wishart",
    "sample_inverse_wishart",
    "sample_dirichlet",
    "sample_beta",
    "sample_categorical",
    "logpdf_mvnormal",
    "logpdf_student_t",
    "check_sym_matrix",
]


class DomainError(ValueError):
    """A parameter lies outside the domain of a function or distribution."""


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: ``(seed, stream_id)`` fixes every draw.

    Child streams are derived by hashing keys, so a task keyed by e.g. a
    variable name gets the same draws no matter which worker runs it or in
    what order.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise DomainError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed),
                                    spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys) -> "RngStream":
        h = hashlib.blake2b(digest_size=8)
        h.update(str(self.stream_id).encode())
        for key in keys:
            h.update(b"\x1f")
            h.update(str(_key_to_int(key)).encode())
        return RngStream(self.seed, int.from_bytes(h.digest(), "little"))


def log_gamma(x):
    """ln Gamma(x) for positive finite ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("log_gamma requires positive finite input")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    return gammaln(arr)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_normal(mean, var, rng, size=None):
    """Normal draws; ``var == 0`` returns ``mean`` exactly."""
    var = np.asarray(var, dtype=float)
    if np.any(var < 0) or not np.all(np.isfinite(var)):
        raise DomainError("normal variance must be finite and >= 0")
    return rng.normal(mean, np.sqrt(var), size=size)


def check_sym_matrix(m, name="matrix", pd=True):
    """Validate a symmetric (optionally positive definite) matrix stack."""
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DomainError("%s must be square" % name)
    if not np.all(np.isfinite(m)):
        raise DomainError("%s has non-finite entries" % name)
    if np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0) > 1e-12 * max(
            1.0, float(np.max(np.abs(m), initial=0.0))):
        raise DomainError("%s is not symmetric" % name)
    if pd:
        try:
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise DomainError("%s is not positive definite" % name) from None
    return None


def sample_mvnormal(mean, cov, rng, size=None):
    mean = np.asarray(mean, dtype=float)
    chol = check_sym_matrix(cov, "covariance")
    shape = (() if size is None else tuple(np.atleast_1d(size))) + mean.shape
    z = rng.standard_normal(shape)
    return mean + z @ chol.T


def sample_gamma(shape, rate, rng, size=None):
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise DomainError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_inverse_gamma(shape, rate, rng, size=None):
    return 1.0 / sample_gamma(shape, rate, rng, size=size)


def sample_wishart(df, scale, rng):
    """Wishart draw(s) by the Bartlett decomposition.

    ``scale`` may be a stack of shape (..., d, d); ``df`` broadcasts against
    the stack shape.
    """
    scale = np.asarray(scale, dtype=float)
    chol = check_sym_matrix(scale, "Wishart scale")
    d = scale.shape[-1]
    batch = scale.shape[:-2]
    df = np.broadcast_to(np.asarray(df, dtype=float), batch)
    if np.any(df <= d - 1):
        raise DomainError("Wishart df must exceed d - 1")
    a = np.zeros(batch + (d, d))
    for i in range(d):
        a[..., i, i] = np.sqrt(rng.chisquare(df - i))
        for j in range(i):
            a[..., i, j] = rng.standard_normal(batch)
    la = chol @ a
    return la @ np.swapaxes(la, -1, -2)


def sample_inverse_wishart(df, scale, rng):
    """Inverse-Wishart draw(s) with mean scale / (df - d - 1)."""
    scale = np.asarray(scale, dtype=float)
    check_sym_matrix(scale, "inverse-Wishart scale")
    w = sample_wishart(df, np.linalg.inv(scale), rng)
    out = np.linalg.inv(w)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sample_dirichlet(alpha, rng, size=None):
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or np.any(alpha <= 0):
        raise DomainError("Dirichlet weights must be a positive vector")
    return rng.dirichlet(alpha, size=size)


def sample_beta(a, b, rng, size=None):
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise DomainError("beta parameters must be positive")
    return rng.beta(a, b, size=size)


def sample_categorical(weights, rng):
    """Index drawn with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(
            np.isfinite(w)):
        raise DomainError("categorical weights must be finite and >= 0")
    cum = np.cumsum(w)
    if cum[-1] <= 0:
        raise DomainError("categorical weights are not normalizable")
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


# ---------------------------------------------------------------------------
# log densities
# ---------------------------------------------------------------------------

def _as_matrix(cov, d):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape != (d, d):
        raise DomainError("scale matrix must be %dx%d" % (d, d))
    return cov


def logpdf_mvnormal(x, mean, cov):
    """Log density of N(mean, cov) at ``x`` (last axis is the dimension).

    Scalars are treated as the univariate case with ``cov`` a variance.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.shape[-1]
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    cov = _as_matrix(cov, d)
    chol = check_sym_matrix(cov, "covariance")
    diff = x - mean
    sol = np.linalg.solve(chol, diff.reshape(-1, d).T).T.reshape(diff.shape)
    maha = np.sum(sol * sol, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * math.log(2 * math.pi) + logdet + maha)


def logpdf_student_t(x, df, loc, scale):
    """Log density of the d-variate Student-t with ``df`` degrees of freedom.

    ``scale`` is the scale matrix (the covariance is scale * df/(df-2)).
    """
    if not df > 0 or not math.isfinite(df):
        raise DomainError("degrees of freedom must be positive")
    loc = np.atleast_1d(np.asarray(loc, dtype=float))
    d = loc.shape[-1]
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    scale = _as_matrix(scale, d)
    chol = check_sym_matrix(scale, "scale")
    diff = x - loc
    sol = np.linalg.solve(chol, diff.reshape(-1, d).T).T.reshape(diff.shape)
    maha = np.sum(sol * sol, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return (gammaln(0.5 * (df + d)) - gammaln(0.5 * df)
            - 0.5 * d * math.log(df * math.pi) - 0.5 * logdet
            - 0.5 * (df + d) * np.log1p(maha / df))
