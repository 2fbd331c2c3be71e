"""Synthetic scenarios, permutation nulls and ROC summaries.

Four generative models are provided:

* ``normal``      (X, Y) bivariate normal with unit variances and correlation rho
* ``sinusoidal``  X ~ U[0, 5 pi],  Y = 2 sin(X) + e
* ``parabolic``   X ~ N(0, 1),     Y = 2 X^2 / 3 + e
* ``circular``    t ~ U[0, 2 pi],  X = 10 cos(t) + e1,  Y = 10 sin(t) + e2

with e ~ N(0, phi^2).  A power study scores R dependent samples and R
copies whose Y has been index-permuted, then summarises each grid cell by
the ROC curve separating the two groups.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .ctbf import build_table, chi_square, dahl_partition, p_dep_over_trace
from .dpm import ChainError, McmcSettings, run_chain
from .mi import knn_mi
from .mixmod import mixmod_ensemble, standardize
from .stats import DomainError, RngStream

__all__ = [
    "KINDS",
    "RHO_GRID",
    "PHI_GRID",
    "PRESETS",
    "ScenarioConfig",
    "RocCurve",
    "CellResult",
    "generate",
    "permute_null",
    "roc",
    "scenario_grid",
    "apply_overrides",
    "power_study",
    "sensitivity_study",
    "write_scores",
    "read_scores",
    "write_summary",
    "write_timing",
]

KINDS = ("normal", "sinusoidal", "parabolic", "circular")
RHO_GRID = (0.0, 0.1, 0.3, 0.5, 0.9)
PHI_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """One grid cell.  ``param`` is rho for ``normal`` and phi otherwise."""

    kind: str
    param: float
    n: int = 250
    replications: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError("unknown scenario %r" % self.kind)
        if self.kind == "normal" and not abs(self.param) < 1:
            raise DomainError("correlation must satisfy |rho| < 1")
        if self.kind != "normal" and not self.param >= 0:
            raise DomainError("noise level must be >= 0")
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if self.replications < 1:
            raise DomainError("replications must be >= 1")


def generate(config: ScenarioConfig, rng):
    """Draw ``config.n`` pairs from the scenario."""
    rng = rng.generator() if isinstance(rng, RngStream) else rng
    n, p = config.n, float(config.param)
    if config.kind == "normal":
        z = rng.standard_normal((n, 2))
        x = z[:, 0]
        y = p * z[:, 0] + math.sqrt(1.0 - p * p) * z[:, 1]
        return x, y
    if config.kind == "sinusoidal":
        x = rng.uniform(0.0, 5.0 * math.pi, n)
        return x, 2.0 * np.sin(x) + p * rng.standard_normal(n)
    if config.kind == "parabolic":
        x = rng.standard_normal(n)
        return x, 2.0 * x * x / 3.0 + p * rng.standard_normal(n)
    t = rng.uniform(0.0, 2.0 * math.pi, n)
    e = p * rng.standard_normal((2, n))
    return 10.0 * np.cos(t) + e[0], 10.0 * np.sin(t) + e[1]


def permute_null(x, y, rng):
    """Return ``x`` and a uniformly permuted copy of ``y``."""
    rng = rng.generator() if isinstance(rng, RngStream) else rng
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise DomainError("x and y must have equal length")
    return x, y[rng.permutation(y.shape[0])]


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    """Operating points for thresholds from +inf down to the lowest score.

    A sample is called dependent when its score is >= the threshold.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def roc(dep_scores, null_scores):
    """ROC curve and trapezoid AUC (ties count half)."""
    dep = np.asarray(dep_scores, dtype=float).reshape(-1)
    null = np.asarray(null_scores, dtype=float).reshape(-1)
    if dep.size == 0 or null.size == 0:
        raise DomainError("both score sets must be non-empty")
    if np.any(np.isnan(dep)) or np.any(np.isnan(null)):
        raise DomainError("scores must not be NaN")
    thr = np.unique(np.concatenate([dep, null]))[::-1]
    dep_s = np.sort(dep)
    null_s = np.sort(null)
    tp = dep.size - np.searchsorted(dep_s, thr, side="left")
    fp = null.size - np.searchsorted(null_s, thr, side="left")
    tpr = np.concatenate([[0.0], tp / dep.size])
    fpr = np.concatenate([[0.0], fp / null.size])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(np.concatenate([[np.inf], thr]), tpr, fpr, auc)


# ---------------------------------------------------------------------------
# presets and plan overrides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    n: int
    replications: int
    mcmc: McmcSettings = McmcSettings()


PRESETS = {
    "standard": Preset(250, 50),
    "quick": Preset(100, 20),
    "ci": Preset(60, 4, McmcSettings(n_burn=100, n_save=100, thin=2)),
}


def scenario_grid(n=250, replications=50, kinds=KINDS):
    """The 4 x 5 grid: rho in RHO_GRID for ``normal``, phi in PHI_GRID
    otherwise."""
    cells = []
    for kind in kinds:
        params = RHO_GRID if kind == "normal" else PHI_GRID
        cells.extend(ScenarioConfig(kind, p, n, replications) for p in params)
    return cells


def apply_overrides(plan, **kw):
    """Copy of a :class:`~dpscreen.screen.ScreenPlan` with prior overrides.

    Recognised keys: ``alpha`` (constant cell prior), ``a`` (total cell
    mass), ``c0`` (fixed concentration of the marginal fits), ``c_prior``
    (Gamma prior on the ensemble concentrations), ``a0``, ``b0``, ``eta``
    and ``k``.
    """
    unknown = set(kw) - {"alpha", "a", "c0", "c_prior", "a0", "b0", "eta",
                         "k"}
    if unknown:
        raise DomainError("unknown override(s): %s" % ", ".join(sorted(
            unknown)))
    if "alpha" in kw:
        plan = replace(plan, ctbf=replace(plan.ctbf, rule="constant",
                                          alpha=float(kw["alpha"])))
    if "a" in kw:
        plan = replace(plan, ctbf=replace(plan.ctbf, rule="total",
                                          a=float(kw["a"])))
    if "c0" in kw:
        plan = replace(plan, ctbf_prior=replace(plan.ctbf_prior,
                                                c=float(kw["c0"]),
                                                c_prior=None))
    if "c_prior" in kw:
        cp = tuple(kw["c_prior"])
        plan = replace(plan, mixmod_priors=tuple(
            replace(c, c_prior=cp, c=cp[0] / cp[1])
            for c in plan.mixmod_priors))
    ens = {k: float(kw[k]) for k in ("a0", "b0", "eta") if k in kw}
    if ens:
        plan = replace(plan, ensemble=replace(plan.ensemble, **ens))
    if "k" in kw:
        plan = replace(plan, mi=replace(plan.mi, k=int(kw["k"])))
    return plan


# ---------------------------------------------------------------------------
# power study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellResult:
    kind: str
    param: float
    method: str
    auc: float | None
    runtime: float
    n_ok: int
    n_failed: int
    dep_scores: np.ndarray = field(repr=False)
    null_scores: np.ndarray = field(repr=False)
    curve: RocCurve | None = field(default=None, repr=False)
    label: str = ""


def _marginal_trace(v, plan, stream):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        trace, _ = run_chain(standardize(v), plan.ctbf_prior, plan.mcmc, None,
                             stream)
    return trace


def _chisq_score(tx, ty):
    chi = chi_square(build_table(dahl_partition(tx), dahl_partition(ty)))
    if chi.dof == 0:
        return 0.0
    return float(-chi2_dist.logsf(chi.statistic, chi.dof))


def _replicate(task):
    """Score one dependent sample and its permuted copy."""
    cell, rep, method, plan, base = task
    key = (cell.kind, repr(float(cell.param)), rep)
    x, y = generate(cell, base.child(*key, "data"))
    x0, y0 = permute_null(x, y, base.child(*key, "perm"))
    try:
        if method in ("ctbf", "chisq"):
            # x is the same in both arms, so its chain is shared.  The
            # marginal sampler is exchangeable, so a chain on y0 = y[perm]
            # has the law of the y chain with its columns permuted; the
            # null arm reuses it.
            tx = _marginal_trace(x, plan, base.child(*key, "x"))
            ty = _marginal_trace(y, plan, base.child(*key, "dep", "y"))
            perm = base.child(*key, "perm").generator().permutation(y.size)
            scores = []
            for ty in (ty, ty.restrict(perm)):
                if method == "ctbf":
                    scores.append(p_dep_over_trace(tx, ty, plan.ctbf).p_dep)
                else:
                    scores.append(_chisq_score(tx, ty))
            return tuple(scores)
        if method == "mixmod":
            return tuple(
                mixmod_ensemble(xx, yy, plan.mixmod_priors, plan.mcmc,
                                plan.ensemble, base.child(*key, arm, method),
                                min_rows=2).pi_hat
                for arm, xx, yy in (("dep", x, y), ("null", x0, y0)))
        if method == "mi":
            return (knn_mi(x, y, plan.mi), knn_mi(x0, y0, plan.mi))
    except (ChainError, DomainError, FloatingPointError):
        return None
    raise DomainError("unknown method %r" % method)


def _run_tasks(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_replicate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_replicate, tasks, chunksize=1))


def power_study(method, grid, plan, rng=None, progress=None, label=""):
    """Run ``method`` on every cell of ``grid`` and summarise by AUC.

    ``grid`` holds :class:`ScenarioConfig` objects, or ``(config,
    overrides)`` pairs whose overrides go through :func:`apply_overrides`.
    Failed replications are dropped from the AUC and counted.
    """
    if method not in ("ctbf", "mixmod", "mi", "chisq"):
        raise DomainError("unknown method %r" % method)
    base = rng if isinstance(rng, RngStream) else RngStream(
        plan.seed if rng is None else int(rng))
    out = []
    for item in grid:
        cell, over = (item, {}) if isinstance(item, ScenarioConfig) else item
        if cell.replications < 2:
            raise DomainError("power study needs at least 2 replications")
        cplan = apply_overrides(plan, **over) if over else plan
        t0 = time.perf_counter()
        tasks = [(cell, r, method, cplan, base)
                 for r in range(cell.replications)]
        res = _run_tasks(tasks, plan.workers)
        elapsed = time.perf_counter() - t0
        ok = [r for r in res if r is not None]
        dep = np.array([r[0] for r in ok])
        null = np.array([r[1] for r in ok])
        curve = roc(dep, null) if ok else None
        out.append(CellResult(cell.kind, float(cell.param), method,
                              curve.auc if curve else None, elapsed, len(ok),
                              len(res) - len(ok), dep, null, curve,
                              label or _label(over)))
        if progress:
            progress("%s %s=%g %s AUC=%s (%.1fs)" % (
                method, cell.kind, cell.param, label or _label(over),
                "NA" if curve is None else "%.3f" % curve.auc, elapsed))
    return out


def _label(over):
    return ",".join("%s=%s" % (k, over[k]) for k in sorted(over))


def sensitivity_study(method, cells, overrides, plan, rng=None,
                      progress=None):
    """Power study repeated for every override set in ``overrides``."""
    grid = [(cell, dict(o)) for o in overrides for cell in cells]
    return power_study(method, grid, plan, rng, progress)


# ---------------------------------------------------------------------------
# plot-ready output
# ---------------------------------------------------------------------------

SCORE_COLUMNS = ("scenario", "parameter", "replication", "score", "label")
SUMMARY_COLUMNS = ("scenario", "parameter", "method", "AUC", "n_ok",
                   "n_failed", "setting")


def write_scores(cells, path):
    """One line per scored sample; label 1 = dependent, 0 = permuted."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for c in cells:
            for lab, scores in ((1, c.dep_scores), (0, c.null_scores)):
                for r, s in enumerate(scores):
                    w.writerow([c.kind, repr(c.param), r, repr(float(s)), lab])


def read_scores(path):
    """{(scenario, parameter): (dep_scores, null_scores)} from
    :func:`write_scores` output."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh, delimiter="\t")
        head = next(rd)
        if tuple(head) != SCORE_COLUMNS:
            raise DomainError("%s: not a scores file" % path)
        for kind, param, _, score, lab in rd:
            d = out.setdefault((kind, float(param)), ([], []))
            d[0 if lab == "1" else 1].append(float(score))
    return {k: (np.array(a), np.array(b)) for k, (a, b) in out.items()}


def write_summary(cells, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for c in cells:
            w.writerow([c.kind, repr(c.param), c.method,
                        "" if c.auc is None else repr(c.auc), c.n_ok,
                        c.n_failed, c.label])


def write_timing(cells, path):
    """Wall-clock seconds per cell (kept apart so summaries stay
    reproducible)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("scenario", "parameter", "method", "setting", "seconds"))
        for c in cells:
            w.writerow([c.kind, repr(c.param), c.method, c.label,
                        "%.3f" % c.runtime])
