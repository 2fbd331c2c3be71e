"""All-pairs dependence screening.

CT-BF screening runs in two stages.  Stage 1 fits one univariate DPM per
variable on every row where that variable is observed.  Stage 2 restricts
each pair of stored traces to the rows where both are observed and averages
the per-iteration dependence probabilities.  The ensemble method and the
MI baseline work on each pair's complete rows directly.

Every random draw comes from a stream keyed by variable name (stage 1) or
by (variable names, method) for pair-level work, so results do not depend
on the worker count or on scheduling order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import __version__
from .ctbf import CtbfConfig, chi_square, build_table, dahl_partition
from .dpm import (ChainError, DpmConfig, McmcSettings, canonicalize_labels,
                  ctbf_marginal_config, mixmod_config, run_chain)
from .kernels import trace_log_bf
from .mi import MiConfig, knn_mi_result
from .mixmod import EnsembleConfig, mixmod_ensemble, standardize
from .stats import DomainError, RngStream

__all__ = [
    "METHODS",
    "MISSING_TOKENS",
    "RESULT_COLUMNS",
    "Dataset",
    "ScreenPlan",
    "PairResult",
    "MarginalFit",
    "load_csv",
    "write_csv",
    "fit_marginals",
    "screen",
    "screen_ctbf",
    "screen_mixmod",
    "screen_mi",
    "persist_results",
    "load_results",
]

METHODS = ("ctbf", "mixmod", "mi", "chisq")
MISSING_TOKENS = frozenset({"", "NA", "NaN"})
RESULT_COLUMNS = ("var_i", "var_j", "n_complete", "p_dep", "pi_hat", "mi",
                  "chi2_T", "chi2_p", "status")

SKIPPED = "skipped-too-few-rows"
CHAIN_ERROR = "chain-error"
CHAIN_WARNING = "chain-warning"
MI_JITTER = "mi-jitter"
MI_TOO_FEW = "mi-too-few-rows"


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """n x p values with NaN marking missing entries."""

    values: np.ndarray
    names: tuple
    row_ids: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DomainError("values must be a 2-d array")
        names = tuple(str(s) for s in self.names)
        rows = tuple(str(s) for s in self.row_ids)
        if len(names) != v.shape[1] or len(rows) != v.shape[0]:
            raise DomainError("names/row ids do not match the value shape")
        if len(set(names)) != len(names):
            raise DomainError("variable names must be unique")
        if len(set(rows)) != len(rows):
            raise DomainError("row ids must be unique")
        if np.any(np.isinf(v)):
            raise DomainError("values must be finite or missing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "row_ids", rows)

    @property
    def missing(self):
        return np.isnan(self.values)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def row_order(self):
        """Row indices sorted by row id (numerically when all ids are
        integers)."""
        try:
            keys = [int(r) for r in self.row_ids]
        except ValueError:
            keys = list(self.row_ids)
        return np.array(sorted(range(self.n), key=lambda i: keys[i]),
                        dtype=np.int64)

    @classmethod
    def from_columns(cls, columns: dict, row_ids=None):
        names = tuple(columns)
        vals = np.column_stack([np.asarray(columns[k], dtype=float)
                                for k in names]) if names else np.zeros((0, 0))
        if row_ids is None:
            row_ids = tuple(str(i + 1) for i in range(vals.shape[0]))
        return cls(vals, names, tuple(row_ids))


def load_csv(path, id_column=None, delimiter=","):
    """Read a numeric table with a header row.

    Empty fields, ``NA`` and ``NaN`` are missing.  ``id_column`` names a
    column holding row ids; otherwise rows are numbered from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise DomainError("%s: missing header row" % path)
    header = [h.strip() for h in rows[0]]
    seen, dup = set(), []
    for h in header:
        if h in seen:
            dup.append(h)
        seen.add(h)
    if dup:
        raise DomainError("%s: duplicate column names: %s"
                          % (path, ", ".join(sorted(set(dup)))))
    body = [r for r in rows[1:] if r]
    id_idx = None
    if id_column is not None:
        if id_column not in header:
            raise DomainError("%s: id column %r not found" % (path, id_column))
        id_idx = header.index(id_column)
    cols = [k for k in range(len(header)) if k != id_idx]
    values = np.full((len(body), len(cols)), np.nan)
    bad = []
    row_ids = []
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DomainError("%s: row %d has %d fields, expected %d"
                              % (path, r + 2, len(row), len(header)))
        row_ids.append(row[id_idx].strip() if id_idx is not None
                       else str(r + 1))
        for c, k in enumerate(cols):
            cell = row[k].strip()
            if cell in MISSING_TOKENS:
                continue
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                bad.append("row %d column %r: %r" % (r + 2, header[k], cell))
                continue
            values[r, c] = v
    if bad:
        shown = "; ".join(bad[:10])
        more = "" if len(bad) <= 10 else " (and %d more)" % (len(bad) - 10)
        raise DomainError("%s: non-numeric cells: %s%s" % (path, shown, more))
    return Dataset(values, tuple(header[k] for k in cols), tuple(row_ids))


def write_csv(dataset: Dataset, path, id_column=None):
    """Write a dataset so that :func:`load_csv` restores it bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = list(dataset.names)
        if id_column:
            head = [id_column] + head
        w.writerow(head)
        for rid, row in zip(dataset.row_ids, dataset.values):
            cells = ["NA" if math.isnan(v) else repr(float(v)) for v in row]
            w.writerow(([rid] if id_column else []) + cells)


# ---------------------------------------------------------------------------
# plan and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreenPlan:
    """What to compute and with which settings."""

    methods: tuple = ("ctbf",)
    min_rows: int = 10
    mcmc: McmcSettings = McmcSettings()
    ctbf_prior: DpmConfig = field(default_factory=ctbf_marginal_config)
    mixmod_priors: tuple = field(default_factory=lambda: (
        mixmod_config(1), mixmod_config(1), mixmod_config(2)))
    ctbf: CtbfConfig = CtbfConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    mi: MiConfig = MiConfig()
    workers: int = 1
    seed: int = 0
    variables: tuple | None = None

    def __post_init__(self):
        methods = tuple(dict.fromkeys(self.methods))
        if not methods:
            raise DomainError("at least one method is required")
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise DomainError("unknown method(s): %s" % ", ".join(unknown))
        object.__setattr__(self, "methods", methods)
        if self.min_rows < 2:
            raise DomainError("minimum complete rows must be >= 2")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")
        if self.variables is not None:
            object.__setattr__(self, "variables", tuple(self.variables))

    def to_dict(self):
        """Serializable form.  ``workers`` is left out: it never changes
        results, and omitting it keeps persisted output identical across
        worker counts."""
        d = asdict(self)
        del d["workers"]
        d["methods"] = list(self.methods)
        d["mixmod_priors"] = [c.to_dict() for c in self.mixmod_priors]
        d["ctbf_prior"] = self.ctbf_prior.to_dict()
        if self.variables is not None:
            d["variables"] = list(self.variables)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["methods"] = tuple(d["methods"])
        d["mcmc"] = McmcSettings(**d["mcmc"])
        d["ctbf_prior"] = DpmConfig.from_dict(d["ctbf_prior"])
        d["mixmod_priors"] = tuple(DpmConfig.from_dict(c)
                                   for c in d["mixmod_priors"])
        d["ctbf"] = CtbfConfig(**d["ctbf"])
        d["ensemble"] = EnsembleConfig(**d["ensemble"])
        d["mi"] = MiConfig(**d["mi"])
        return cls(**d)


@dataclass(frozen=True)
class PairResult:
    """Metrics for one pair; unset metrics are None."""

    i: int
    j: int
    var_i: str
    var_j: str
    n_complete: int
    p_dep: float | None = None
    pi_hat: float | None = None
    mi: float | None = None
    chi2_T: float | None = None
    chi2_p: float | None = None
    status: tuple = ()

    @property
    def skipped(self):
        return SKIPPED in self.status

    @property
    def status_text(self):
        return ";".join(self.status) if self.status else "ok"

    def merge(self, other: "PairResult"):
        upd = {k: getattr(other, k) for k in
               ("p_dep", "pi_hat", "mi", "chi2_T", "chi2_p")
               if getattr(other, k) is not None}
        status = tuple(dict.fromkeys(self.status + other.status))
        return replace(self, status=status, **upd)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _stream(plan, rng):
    if isinstance(rng, RngStream):
        return rng
    return RngStream(plan.seed if rng is None else int(rng))


def _var_indices(dataset, plan):
    if plan.variables is None:
        return list(range(dataset.p))
    idx = []
    for name in plan.variables:
        if name not in dataset.names:
            raise DomainError("unknown variable %r" % name)
        idx.append(dataset.names.index(name))
    return sorted(set(idx))


def _pairs(dataset, plan):
    idx = _var_indices(dataset, plan)
    return [(a, b) for k, a in enumerate(idx) for b in idx[k + 1:]]


def _chunks(items, workers):
    if not items:
        return []
    size = max(1, min(64, math.ceil(len(items) / (4 * workers))))
    return [items[k:k + size] for k in range(0, len(items), size)]


def _map(fn, tasks, workers, initializer=None, initargs=()):
    """Run ``fn`` over ``tasks``; a process pool is used when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        try:
            return [fn(t) for t in tasks]
        finally:
            if initializer is not None:
                initializer(None)
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)),
                             initializer=initializer,
                             initargs=initargs) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# stage 1: marginal chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarginalFit:
    """Stored trace of one variable.  ``rows`` are dataset row indices in
    row-id order; trace column k belongs to ``rows[k]``."""

    name: str
    rows: np.ndarray
    labels: np.ndarray | None
    dahl: np.ndarray | None
    warnings: tuple = ()
    error: str | None = None


def _fit_marginal(task):
    name, rows, values, prior, mcmc, stream, want_dahl = task
    if rows.size == 0:
        return MarginalFit(name, rows, None, None, (), "no observations")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            trace, _ = run_chain(standardize(values), prior, mcmc, None,
                                 stream)
    except (ChainError, DomainError, FloatingPointError) as exc:
        return MarginalFit(name, rows, None, None, (), str(exc))
    dahl = dahl_partition(trace) if want_dahl else None
    return MarginalFit(name, rows, trace.labels, dahl, trace.warnings)


def fit_marginals(dataset: Dataset, plan: ScreenPlan, rng=None,
                  indices=None):
    """Stage 1: one chain per variable; returns {index: MarginalFit}."""
    base = _stream(plan, rng)
    order = dataset.row_order()
    idx = _var_indices(dataset, plan) if indices is None else list(indices)
    want_dahl = "chisq" in plan.methods
    tasks = []
    for k in idx:
        col = dataset.values[order, k]
        present = ~np.isnan(col)
        tasks.append((dataset.names[k], order[present], col[present],
                      plan.ctbf_prior, plan.mcmc,
                      base.child("marginal", dataset.names[k]), want_dahl))
    fits = _map(_fit_marginal, tasks, plan.workers)
    return dict(zip(idx, fits))


# ---------------------------------------------------------------------------
# stage 2: pair tasks
# ---------------------------------------------------------------------------

_FITS = None


def _set_fits(fits):
    global _FITS
    _FITS = fits


def _ctbf_pair(task):
    out = []
    for a, b, common, cfg, want_p, want_chi in task:
        fa, fb = _FITS[a], _FITS[b]
        pa = np.searchsorted(fa.rows_sorted, common)
        pb = np.searchsorted(fb.rows_sorted, common)
        pa = fa.rank[pa]
        pb = fb.rank[pb]
        res = {}
        if want_p:
            alpha, total = cfg.kernel_args
            lbf = trace_log_bf(np.ascontiguousarray(fa.labels[:, pa],
                                                    dtype=np.int64),
                               np.ascontiguousarray(fb.labels[:, pb],
                                                    dtype=np.int64),
                               alpha, total)
            res["p_dep"] = float(math.fsum(expit(-lbf)) / lbf.size)
        if want_chi:
            t = build_table(canonicalize_labels(fa.dahl[pa]),
                            canonicalize_labels(fb.dahl[pb]))
            chi = chi_square(t)
            res["chi2_T"] = chi.statistic
            res["chi2_p"] = chi.p_value
        out.append(res)
    return out


@dataclass(frozen=True)
class _Lookup:
    """Stage-1 fit plus a sorted index for locating dataset rows."""

    labels: np.ndarray
    dahl: np.ndarray | None
    rows_sorted: np.ndarray
    rank: np.ndarray


def _lookup(fit: MarginalFit):
    order = np.argsort(fit.rows, kind="stable")
    return _Lookup(fit.labels, fit.dahl, fit.rows[order], order)


def _skeleton(dataset, plan):
    """One PairResult per pair with n_complete and the skip flag."""
    miss = dataset.missing
    out = {}
    for a, b in _pairs(dataset, plan):
        nc = int(np.sum(~miss[:, a] & ~miss[:, b]))
        status = (SKIPPED,) if nc < plan.min_rows else ()
        out[(a, b)] = PairResult(a, b, dataset.names[a], dataset.names[b], nc,
                                 status=status)
    return out


def _common_rows(dataset, order, a, b):
    miss = dataset.missing
    keep = ~miss[order, a] & ~miss[order, b]
    return order[keep]


def screen_ctbf(dataset: Dataset, plan: ScreenPlan, rng=None,
                fits=None, methods=None):
    """Two-stage CT-BF screening (and the chi-square variant when asked).

    Returns PairResults sorted by (i, j).
    """
    methods = plan.methods if methods is None else methods
    want_p = "ctbf" in methods
    want_chi = "chisq" in methods
    skel = _skeleton(dataset, plan)
    if fits is None:
        needed = sorted({k for (a, b), r in skel.items() if not r.skipped
                         for k in (a, b)})
        fits = fit_marginals(dataset, plan, rng, indices=needed)
    order = dataset.row_order()
    lookups = {k: _lookup(f) for k, f in fits.items() if f.error is None}
    tasks, keys = [], []
    for (a, b), r in skel.items():
        if r.skipped:
            continue
        fa, fb = fits.get(a), fits.get(b)
        if fa is None or fb is None or fa.error or fb.error:
            skel[(a, b)] = replace(r, status=r.status + (CHAIN_ERROR,))
            continue
        warn = (CHAIN_WARNING,) if fa.warnings or fb.warnings else ()
        skel[(a, b)] = replace(r, status=r.status + warn)
        tasks.append((a, b, _common_rows(dataset, order, a, b), plan.ctbf,
                      want_p, want_chi))
        keys.append((a, b))
    chunks = _chunks(tasks, plan.workers)
    parts = _map(_ctbf_pair, chunks, plan.workers, _set_fits, (lookups,))
    flat = [res for part in parts for res in part]
    for key, res in zip(keys, flat):
        skel[key] = replace(skel[key], **res)
    return [skel[k] for k in sorted(skel)]


def _mixmod_pair(task):
    out = []
    for x, y, priors, mcmc, cfg, stream, min_rows in task:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = mixmod_ensemble(x, y, priors, mcmc, cfg, stream,
                                      min_rows=min_rows)
        except (ChainError, DomainError, FloatingPointError):
            out.append(({}, (CHAIN_ERROR,)))
            continue
        status = (CHAIN_WARNING,) if res.warnings else ()
        out.append(({"pi_hat": res.pi_hat}, status))
    return out


def _mi_pair(task):
    out = []
    for x, y, cfg, stream in task:
        if x.size <= cfg.k:
            out.append(({}, (MI_TOO_FEW,)))
            continue
        r = knn_mi_result(x, y, cfg, stream.generator())
        out.append(({"mi": r.mi}, (MI_JITTER,) if r.jittered else ()))
    return out


def _pairwise(dataset, plan, rng, fn, method, build):
    base = _stream(plan, rng)
    skel = _skeleton(dataset, plan)
    order = dataset.row_order()
    tasks, keys = [], []
    for (a, b), r in skel.items():
        if r.skipped:
            continue
        rows = _common_rows(dataset, order, a, b)
        x = dataset.values[rows, a]
        y = dataset.values[rows, b]
        stream = base.child("pair", dataset.names[a], dataset.names[b],
                            method)
        tasks.append(build(x, y, stream))
        keys.append((a, b))
    parts = _map(fn, _chunks(tasks, plan.workers), plan.workers)
    flat = [res for part in parts for res in part]
    for key, (vals, status) in zip(keys, flat):
        r = skel[key]
        skel[key] = replace(r, status=r.status + status, **vals)
    return [skel[k] for k in sorted(skel)]


def screen_mixmod(dataset: Dataset, plan: ScreenPlan, rng=None):
    """Ensemble weight for every eligible pair, fitted on its complete rows
    (sorted by row id and standardized on those rows)."""
    return _pairwise(
        dataset, plan, rng, _mixmod_pair, "mixmod",
        lambda x, y, s: (x, y, plan.mixmod_priors, plan.mcmc, plan.ensemble,
                         s, plan.min_rows))


def screen_mi(dataset: Dataset, plan: ScreenPlan, rng=None):
    """kNN mutual information for every eligible pair.

    Pairs with no more complete rows than ``k`` get no estimate and the
    status token ``mi-too-few-rows``.
    """
    return _pairwise(dataset, plan, rng, _mi_pair, "mi",
                     lambda x, y, s: (x, y, plan.mi, s))


def screen(dataset: Dataset, plan: ScreenPlan, rng=None, progress=None):
    """Run every method in the plan and merge the per-pair metrics."""
    say = progress or (lambda msg: None)
    merged = {(r.i, r.j): r for r in _skeleton(dataset, plan).values()}
    if "ctbf" in plan.methods or "chisq" in plan.methods:
        say("ctbf: fitting %d marginal chains" % len(_var_indices(dataset,
                                                                  plan)))
        for r in screen_ctbf(dataset, plan, rng):
            merged[(r.i, r.j)] = merged[(r.i, r.j)].merge(r)
    if "mixmod" in plan.methods:
        say("mixmod: fitting %d pairs" % len(merged))
        for r in screen_mixmod(dataset, plan, rng):
            merged[(r.i, r.j)] = merged[(r.i, r.j)].merge(r)
    if "mi" in plan.methods:
        say("mi: %d pairs" % len(merged))
        for r in screen_mi(dataset, plan, rng):
            merged[(r.i, r.j)] = merged[(r.i, r.j)].merge(r)
    return [merged[k] for k in sorted(merged)]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(v):
    return "" if v is None else repr(float(v))


def _parse(v, cast=float):
    return None if v == "" else cast(v)


def persist_results(results, path, fmt=None, plan: ScreenPlan | None = None,
                    seed=None):
    """Write results as TSV (default) or JSON (``fmt="json"`` or a ``.json``
    path).  JSON also records the plan and seed."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "tsv")
    if fmt not in ("tsv", "json"):
        raise DomainError("format must be 'tsv' or 'json'")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "tsv":
                fh.write("\t".join(RESULT_COLUMNS) + "\n")
                for r in results:
                    fh.write("\t".join([
                        r.var_i, r.var_j, str(r.n_complete), _fmt(r.p_dep),
                        _fmt(r.pi_hat), _fmt(r.mi), _fmt(r.chi2_T),
                        _fmt(r.chi2_p), r.status_text]) + "\n")
            else:
                doc = {
                    "version": __version__,
                    "seed": plan.seed if seed is None and plan else seed,
                    "plan": plan.to_dict() if plan else None,
                    "results": [dict(asdict(r), status=r.status_text)
                                for r in results],
                }
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError("cannot write results to %s: %s" % (path, exc)) from exc


def _status(text):
    return () if text in ("", "ok") else tuple(text.split(";"))


def load_results(path, variables=None):
    """Read results written by :func:`persist_results`.

    For TSV input, pair indices come from ``variables`` (a name sequence)
    or else from the order in which names first appear.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        out = []
        for d in doc["results"]:
            d = dict(d)
            d["status"] = _status(d["status"])
            out.append(PairResult(**d))
        return out
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != RESULT_COLUMNS:
        raise DomainError("%s: not a results file" % path)
    index = {}
    if variables is not None:
        index = {name: k for k, name in enumerate(variables)}
    out = []
    for line in lines[1:]:
        if not line:
            continue
        f = line.split("\t")
        if len(f) != len(RESULT_COLUMNS):
            raise DomainError("%s: malformed line %r" % (path, line))
        for name in f[:2]:
            if name not in index:
                if variables is not None:
                    raise DomainError("unknown variable %r" % name)
                index[name] = len(index)
        out.append(PairResult(
            index[f[0]], index[f[1]], f[0], f[1], int(f[2]), _parse(f[3]),
            _parse(f[4]), _parse(f[5]), _parse(f[6]), _parse(f[7]),
            _status(f[8])))
    return out


def default_workers():
    return os.cpu_count() or 1
