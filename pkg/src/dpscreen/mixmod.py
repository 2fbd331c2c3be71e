"""Mixture-weight dependence measures.

The joint density of a pair is modelled as a two-component ensemble

    f*(x, y) = pi f1(x, y) + (1 - pi) f0X(x) f0Y(y),     pi ~ Beta(a0, b0)

where f1 is a bivariate DPM predictive and f0X, f0Y are univariate DPM
predictives.  The posterior mean of pi measures dependence.

:func:`mixmod_ensemble` fits the three DPMs once on all rows and evaluates
the posterior of pi on a grid.  :func:`mixmod_gibbs` instead alternates
between refitting the DPMs on the points allocated to each component and
updating latent allocations and pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, betaincc, betaln

from .dpm import (ChainError, McmcSettings, as_generator,
                  mixmod_config, run_chain)
from .stats import DomainError, RngStream

__all__ = [
    "EnsembleConfig",
    "PredictiveValues",
    "PiGrid",
    "EnsembleResult",
    "MixModGibbsState",
    "MixModGibbsResult",
    "standardize",
    "pi_log_posterior_grid",
    "estimate_pi",
    "fit_predictive_values",
    "mixmod_ensemble",
    "mixmod_gibbs",
    "mixmod_gibbs_step",
]


@dataclass(frozen=True)
class EnsembleConfig:
    """Beta(a0, b0) prior on pi and the grid spacing ``eta``.

    ``quadrature`` sets how grid points are weighted in the posterior mean.
    ``"cell"`` uses the prior mass of the cell around each point, which
    stays accurate when the prior density is unbounded at 0 or 1;
    ``"point"`` uses the prior density at the point.
    """

    a0: float = 0.5
    b0: float = 0.5
    eta: float = 1e-4
    quadrature: str = "cell"

    def __post_init__(self):
        if not (self.a0 > 0 and self.b0 > 0):
            raise DomainError("Beta prior parameters must be positive")
        if not 0 < self.eta < 1:
            raise DomainError("grid interval must be in (0,1)")
        if self.quadrature not in ("cell", "point"):
            raise DomainError("quadrature must be 'cell' or 'point'")

    def grid(self):
        """pi values eta, 2 eta, ... strictly inside (0, 1)."""
        m = int(math.ceil(1.0 / self.eta - 1e-9))
        g = self.eta * np.arange(1, m + 1)
        return g[g < 1.0 - 1e-12]


@dataclass(frozen=True)
class PredictiveValues:
    """Log predictive densities at the observed points.

    Stored on the log scale so that very small or very large densities do
    not lose precision; :meth:`from_densities` accepts plain densities.
    """

    log_f1: np.ndarray
    log_f0x: np.ndarray
    log_f0y: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float).reshape(-1) for a in
                (self.log_f1, self.log_f0x, self.log_f0y)]
        if not arrs[0].size:
            raise DomainError("predictive values are empty")
        if len({a.size for a in arrs}) != 1:
            raise DomainError("predictive value lengths differ")
        for a in arrs:
            if np.any(np.isnan(a)) or np.any(a == np.inf):
                raise DomainError("predictive densities must be finite")
        object.__setattr__(self, "log_f1", arrs[0])
        object.__setattr__(self, "log_f0x", arrs[1])
        object.__setattr__(self, "log_f0y", arrs[2])

    @classmethod
    def from_densities(cls, f1, f0x, f0y):
        vals = [np.asarray(a, dtype=float) for a in (f1, f0x, f0y)]
        for a in vals:
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise DomainError("densities must be finite and >= 0")
        with np.errstate(divide="ignore"):
            return cls(*(np.log(a) for a in vals))

    @property
    def n(self):
        return self.log_f1.size

    @property
    def f1(self):
        return np.exp(self.log_f1)

    @property
    def f0x(self):
        return np.exp(self.log_f0x)

    @property
    def f0y(self):
        return np.exp(self.log_f0y)

    def permuted(self, order):
        return PredictiveValues(self.log_f1[order], self.log_f0x[order],
                                self.log_f0y[order])


@dataclass(frozen=True)
class PiGrid:
    """Grid points, their log posterior L_j and optional per-point log
    quadrature corrections added only when averaging."""

    pi: np.ndarray
    log_post: np.ndarray
    log_quad: np.ndarray | None = None


@dataclass(frozen=True)
class EnsembleResult:
    """Posterior mean of pi with the grid it was computed from."""

    pi_hat: float
    grid: PiGrid
    posterior: np.ndarray
    predictive: PredictiveValues | None = None
    warnings: tuple = ()


def _log_beta_pdf(p, a, b):
    return (a - 1.0) * np.log(p) + (b - 1.0) * np.log1p(-p) - betaln(a, b)


def pi_log_posterior_grid(pv: PredictiveValues, config=EnsembleConfig()):
    """Unnormalised log posterior of pi at every grid point."""
    lf1 = pv.log_f1
    lf0 = pv.log_f0x + pv.log_f0y
    if np.any(np.isneginf(lf1) & np.isneginf(lf0)):
        raise DomainError("zero predictive support")
    grid = config.grid()
    lp = np.log(grid)
    lq = np.log1p(-grid)
    loglik = np.zeros(grid.size)
    # bound the size of the n x grid intermediate
    step = max(1, 2_000_000 // grid.size)
    with np.errstate(divide="ignore"):
        for start in range(0, lf1.size, step):
            a = lf1[start:start + step, None] + lp[None, :]
            b = lf0[start:start + step, None] + lq[None, :]
            loglik += np.logaddexp(a, b).sum(axis=0)
    log_prior = _log_beta_pdf(grid, config.a0, config.b0)
    quad = None
    if config.quadrature == "cell":
        quad = _log_cell_mass(grid, config.a0, config.b0) - log_prior
    return PiGrid(grid, loglik + log_prior, quad)


def _log_cell_mass(grid, a, b):
    """Log prior mass of the cells between grid midpoints (the outer cells
    extend to 0 and 1); falls back to density times width on underflow."""
    edges = np.concatenate([[0.0], 0.5 * (grid[1:] + grid[:-1]), [1.0]])
    lower = edges[:-1]
    upper = edges[1:]
    left = grid <= 0.5
    mass = np.where(left, betainc(a, b, upper) - betainc(a, b, lower),
                    betaincc(a, b, lower) - betaincc(a, b, upper))
    with np.errstate(divide="ignore"):
        out = np.log(mass)
    bad = ~(mass > 0) | ~np.isfinite(out)
    out[bad] = (_log_beta_pdf(grid[bad], a, b)
                + np.log(upper[bad] - lower[bad]))
    return out


def estimate_pi(grid: PiGrid, predictive=None):
    """Posterior mean of pi over the grid, with max-subtraction."""
    L = np.asarray(grid.log_post, dtype=float)
    if L.size == 0 or not np.any(np.isfinite(L)):
        raise DomainError("log posterior is -inf on the whole grid")
    if grid.log_quad is not None:
        L = L + grid.log_quad
    w = np.exp(L - L.max())
    w /= w.sum()
    return EnsembleResult(float(np.dot(grid.pi, w)), grid, w, predictive)


def standardize(v):
    """Centre and scale by the sample standard deviation (ddof=1)."""
    v = np.asarray(v, dtype=float)
    out = v - v.mean()
    if v.size > 1:
        sd = v.std(ddof=1)
        if sd > 0:
            out = out / sd
    return out


def _streams(rng, names):
    if isinstance(rng, RngStream):
        return [rng.child(name) for name in names]
    gen = as_generator(rng)
    return [np.random.default_rng(s) for s in
            gen.integers(0, 2 ** 63, size=len(names))]


def _default_configs(configs):
    if configs is None:
        return mixmod_config(1), mixmod_config(1), mixmod_config(2)
    cx, cy, cj = configs
    if cx.dim != 1 or cy.dim != 1 or cj.dim != 2:
        raise DomainError("configs must be (univariate, univariate, "
                          "bivariate)")
    return cx, cy, cj


def fit_predictive_values(x, y, configs=None, mcmc=McmcSettings(), rng=None,
                          eval_x=None, eval_y=None):
    """Fit the three DPMs on (x, y) and evaluate their averaged predictives.

    The predictives are evaluated at ``(eval_x, eval_y)``, which default to
    the fitted points.
    """
    cx, cy, cj = _default_configs(configs)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ex = x if eval_x is None else np.asarray(eval_x, dtype=float)
    ey = y if eval_y is None else np.asarray(eval_y, dtype=float)
    rx, ry, rj = _streams(rng, ("x", "y", "xy"))
    tx, px = run_chain(x, cx, mcmc, ex, rx)
    ty, py = run_chain(y, cy, mcmc, ey, ry)
    tj, pj = run_chain(np.column_stack([x, y]), cj, mcmc,
                       np.column_stack([ex, ey]), rj)
    warn = tuple(dict.fromkeys(tx.warnings + ty.warnings + tj.warnings))
    with np.errstate(divide="ignore"):
        pv = PredictiveValues(np.log(pj.density), np.log(px.density),
                              np.log(py.density))
    return pv, warn


def mixmod_ensemble(x, y, configs=None, mcmc=McmcSettings(),
                    config=EnsembleConfig(), rng=None, min_rows=10):
    """Posterior mean of the ensemble weight for one pair.

    Both variables are standardized on the given rows, the three DPMs are
    fitted on all of them, and the grid estimator is applied to the
    predictives at the observed points.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise DomainError("x and y must have equal length")
    if x.size < min_rows:
        raise DomainError("need at least %d paired rows" % min_rows)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("observations must be finite")
    pv, warn = fit_predictive_values(standardize(x), standardize(y), configs,
                                     mcmc, rng)
    res = estimate_pi(pi_log_posterior_grid(pv, config), pv)
    return EnsembleResult(res.pi_hat, res.grid, res.posterior, pv, warn)


# ---------------------------------------------------------------------------
# iterative variant
# ---------------------------------------------------------------------------

@dataclass
class MixModGibbsState:
    """Allocations (1 = joint component), pi and the latest predictives."""

    zeta: np.ndarray
    pi: float
    predictive: PredictiveValues | None = None

    @property
    def l0(self):
        return int(np.sum(self.zeta == 0))


@dataclass(frozen=True)
class MixModGibbsResult:
    pi_hat: float
    trajectory: np.ndarray
    accepted: np.ndarray
    skipped: np.ndarray
    state: MixModGibbsState = field(repr=False)


def _refit(x, y, zeta, configs, n_sweeps, rng):
    cx, cy, cj = configs
    dep = zeta == 1
    ind = ~dep
    mc = McmcSettings(n_burn=n_sweeps - 1, n_save=1, thin=1)
    rx, ry, rj = _streams(rng, ("x", "y", "xy"))
    _, px = run_chain(x[ind], cx, mc, x, rx)
    _, py = run_chain(y[ind], cy, mc, y, ry)
    _, pj = run_chain(np.column_stack([x[dep], y[dep]]), cj, mc,
                      np.column_stack([x, y]), rj)
    with np.errstate(divide="ignore"):
        return PredictiveValues(np.log(pj.density), np.log(px.density),
                                np.log(py.density))


def mixmod_gibbs_step(state, pv, config, rng, min_side=5):
    """One allocation proposal and pi draw given refitted predictives.

    Returns ``(new_state, accepted)``.  The proposal is discarded when
    fewer than ``min_side`` points would remain on either side.
    """
    gen = as_generator(rng)
    n = state.zeta.size
    a = math.log(state.pi) + pv.log_f1
    b = math.log1p(-state.pi) + pv.log_f0x + pv.log_f0y
    with np.errstate(invalid="ignore"):
        prob = np.exp(a - np.logaddexp(a, b))
    prob = np.nan_to_num(prob, nan=0.5)
    proposal = (gen.random(n) < prob).astype(np.int64)
    l0 = int(np.sum(proposal == 0))
    accepted = min(l0, n - l0) >= min_side
    zeta = proposal if accepted else state.zeta.copy()
    new = MixModGibbsState(zeta, state.pi, pv)
    l0 = new.l0
    pi = float(gen.beta(config.a0 + l0, config.b0 + n - l0))
    new.pi = min(max(pi, 1e-300), 1.0 - 1e-16)
    return new, accepted


def mixmod_gibbs(x, y, configs=None, config=EnsembleConfig(), n_iter=100,
                 rng=None, refit_range=(50, 100), min_side=5):
    """Iterative latent-allocation sampler for the ensemble weight.

    Starts from pi = 0.5 with half the points (chosen at random) allocated
    to the joint component.  Every iteration refits the three DPMs on their
    allocated subsets for a random number of sweeps in ``refit_range``,
    proposes new allocations with probability
    pi f1 / (pi f1 + (1 - pi) f0X f0Y), keeps the proposal only if both
    sides retain at least ``min_side`` points, and draws
    pi ~ Beta(a0 + l0, b0 + n - l0) where l0 counts independent-side
    points.  The estimate averages pi over the last 90% of iterations.
    """
    x = standardize(np.asarray(x, dtype=float).reshape(-1))
    y = standardize(np.asarray(y, dtype=float).reshape(-1))
    n = x.size
    if y.size != n:
        raise DomainError("x and y must have equal length")
    if n < 10:
        raise DomainError("need at least 10 paired rows")
    if n_iter < 10:
        raise DomainError("need at least 10 iterations")
    lo, hi = refit_range
    if not 1 <= lo <= hi:
        raise DomainError("invalid refit range")
    configs = _default_configs(configs)
    base = rng if isinstance(rng, RngStream) else None
    gen = base.child("control").generator() if base else as_generator(rng)

    zeta = np.zeros(n, np.int64)
    zeta[gen.permutation(n)[: n // 2]] = 1
    state = MixModGibbsState(zeta, 0.5)
    traj = np.empty(n_iter)
    traj[0] = state.pi
    accepted = np.zeros(n_iter, bool)
    skipped = np.zeros(n_iter, bool)
    for t in range(1, n_iter):
        sweeps = int(gen.integers(lo, hi + 1))
        sub = base.child("refit", t) if base else gen
        try:
            pv = _refit(x, y, state.zeta, configs, sweeps, sub)
        except ChainError:
            skipped[t] = True
            traj[t] = state.pi
            continue
        state, accepted[t] = mixmod_gibbs_step(state, pv, config, gen,
                                               min_side)
        traj[t] = state.pi
    start = n_iter // 10
    return MixModGibbsResult(float(traj[start:].mean()), traj, accepted,
                             skipped, state)
