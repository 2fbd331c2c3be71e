"""Command-line interface.

Subcommands
-----------
screen       all-pairs screening of a CSV file
simulate     power study over the synthetic scenario grid
sensitivity  power study repeated over a sweep of prior settings

Exit codes: 0 success; 1 finished but some pairs or replications failed;
2 usage error or fatal error.  Progress goes to stderr; stdout only lists
the files written.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace

from . import __version__
from .ctbf import CtbfConfig
from .dpm import McmcSettings, ctbf_marginal_config, mixmod_config
from .mi import MiConfig
from .mixmod import EnsembleConfig
from .screen import (CHAIN_ERROR, METHODS, ScreenPlan, load_csv,
                     persist_results, screen)
from .simulate import (KINDS, PRESETS, apply_overrides, power_study,
                       scenario_grid, sensitivity_study, write_scores,
                       write_summary, write_timing)
from .stats import DomainError

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2

SEED_ENV = "DPSCREEN_SEED"

# single source for every default shown by --help
_CTBF_PRIOR = ctbf_marginal_config()
_MIXMOD_PRIOR = mixmod_config(1)
_CTBF = CtbfConfig()
_ENSEMBLE = EnsembleConfig()
_MI = MiConfig()
_MCMC = McmcSettings()
_PLAN = ScreenPlan()

DEFAULTS = {
    "c0": _CTBF_PRIOR.c,
    "c1_prior": _MIXMOD_PRIOR.c_prior,
    "alpha": _CTBF.alpha,
    "alpha_rule": _CTBF.rule,
    "a": _CTBF.a,
    "a0": _ENSEMBLE.a0,
    "b0": _ENSEMBLE.b0,
    "eta": _ENSEMBLE.eta,
    "k": _MI.k,
    "n_burn": _MCMC.n_burn,
    "n_save": _MCMC.n_save,
    "thin": _MCMC.thin,
    "min_rows": _PLAN.min_rows,
}

_CTBF_FLAGS = ("c0", "alpha", "alpha_rule", "a")
_MIXMOD_FLAGS = ("c1_prior", "a0", "b0", "eta")
_MI_FLAGS = ("k",)


# ---------------------------------------------------------------------------
# value parsers
# ---------------------------------------------------------------------------

def _positive(kind=float):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError("expected a number, got %r"
                                             % text) from None
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return parse


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, got %r"
                                         % text) from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _eta(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number, got %r"
                                         % text) from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("grid interval must be in (0,1)")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, got %r"
                                         % text) from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("must be in [0, 2**64)")
    return v


def _min_rows(text):
    v = _nonneg_int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("must be >= 2")
    return v


def _methods(allowed):
    def parse(text):
        items = [m.strip() for m in text.split(",") if m.strip()]
        bad = [m for m in items if m not in allowed]
        if not items or bad:
            raise argparse.ArgumentTypeError(
                "choose from %s (comma separated)" % ",".join(allowed))
        return tuple(dict.fromkeys(items))
    return parse


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers")
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _pair_list(text):
    """'0.5:0.5,1:1' -> [(0.5, 0.5), (1.0, 1.0)]"""
    out = []
    for item in text.split(","):
        try:
            a, b = (float(v) for v in item.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(
                "expected pairs like 0.5:0.5,1:1") from None
        if not (a > 0 and b > 0):
            raise argparse.ArgumentTypeError("values must be positive")
        out.append((a, b))
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _default_seed():
    text = os.environ.get(SEED_ENV)
    if text is None:
        return 0
    try:
        return _seed(text)
    except argparse.ArgumentTypeError:
        return 0


def _add_common(p, methods_default, methods_allowed):
    d = DEFAULTS
    p.add_argument("--methods", type=_methods(methods_allowed),
                   default=methods_default,
                   help="comma-separated subset of %s (default: %s)"
                   % (",".join(methods_allowed), ",".join(methods_default)))
    p.add_argument("--seed", type=_seed, default=None,
                   help="master seed (default: $%s or 0)" % SEED_ENV)
    p.add_argument("--workers", type=_positive(int), default=None,
                   help="worker processes (default: logical cores = %d)"
                   % (os.cpu_count() or 1))
    g = p.add_argument_group("MCMC")
    g.add_argument("--n-burn", type=_nonneg_int, default=None,
                   help="discarded sweeps (default: %d)" % d["n_burn"])
    g.add_argument("--n-save", type=_positive(int), default=None,
                   help="stored states (default: %d)" % d["n_save"])
    g.add_argument("--thin", type=_positive(int), default=None,
                   help="store every THIN-th sweep (default: %d)" % d["thin"])
    g = p.add_argument_group("contingency-table test")
    g.add_argument("--c0", type=_positive(), default=None,
                   help="fixed concentration of the marginal fits "
                   "(default: %g)" % d["c0"])
    g.add_argument("--alpha", type=_positive(), default=None,
                   help="constant cell prior alpha_kl (default: %g)"
                   % d["alpha"])
    g.add_argument("--alpha-rule", choices=("constant", "total"),
                   default=None,
                   help="cell prior rule (default: %s)" % d["alpha_rule"])
    g.add_argument("--a", type=_positive(), default=None,
                   help="total cell mass for --alpha-rule total "
                   "(default: %g)" % d["a"])
    g = p.add_argument_group("ensemble test")
    g.add_argument("--c1-prior", type=_positive(), nargs=2, default=None,
                   metavar=("SHAPE", "RATE"),
                   help="Gamma prior on the concentration (default: %g %g)"
                   % d["c1_prior"])
    g.add_argument("--a0", type=_positive(), default=None,
                   help="Beta prior a0 on the weight (default: %g)" % d["a0"])
    g.add_argument("--b0", type=_positive(), default=None,
                   help="Beta prior b0 on the weight (default: %g)" % d["b0"])
    g.add_argument("--eta", type=_eta, default=None,
                   help="grid interval (default: %g)" % d["eta"])
    g = p.add_argument_group("mutual information")
    g.add_argument("--k", type=_positive(int), default=None,
                   help="nearest neighbours (default: %d)" % d["k"])
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="progress messages on stderr")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dpscreen",
        description="Pairwise dependence screening with Dirichlet process "
                    "mixtures.",
        epilog="exit codes: 0 ok, 1 some pairs/replications failed, "
               "2 usage or fatal error")
    parser.add_argument("--version", action="version",
                        version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("screen", help="screen all variable pairs of a CSV",
                       description="Screen every pair of columns of a CSV.")
    p.add_argument("--input", required=True, help="CSV with a header row")
    p.add_argument("--output", default="results.tsv",
                   help="results file (default: results.tsv)")
    p.add_argument("--format", choices=("tsv", "json"), default=None,
                   help="output format (default: from the file extension, "
                   "else tsv)")
    p.add_argument("--id-column", default=None,
                   help="column holding row ids (default: row numbers)")
    p.add_argument("--variables", default=None,
                   help="comma-separated subset of columns to screen")
    p.add_argument("--min-rows", type=_min_rows, default=None,
                   help="minimum complete rows per pair (default: %d)"
                   % DEFAULTS["min_rows"])
    _add_common(p, ("ctbf", "mi"), METHODS)

    p = sub.add_parser("simulate", help="power study on synthetic data",
                       description="ROC/AUC power study over the scenario "
                       "grid.")
    _add_sim_args(p)
    _add_common(p, ("ctbf", "mixmod", "mi"), METHODS)

    p = sub.add_parser("sensitivity", help="prior sensitivity sweeps",
                       description="Repeat the power study over a sweep of "
                       "prior settings.")
    _add_sim_args(p)
    p.add_argument("--sweep", choices=("alpha-c0", "a-c0", "a0-b0"),
                   required=True,
                   help="alpha-c0 / a-c0: contingency-table cell prior by "
                   "marginal concentration; a0-b0: ensemble Beta prior")
    p.add_argument("--alpha-values", type=_float_list, default=[0.1, 0.5, 1.0],
                   help="cell prior values (default: 0.1,0.5,1)")
    p.add_argument("--a-values", type=_float_list, default=[1.0, 5.0, 10.0],
                   help="total cell masses (default: 1,5,10)")
    p.add_argument("--c0-values", type=_float_list, default=[1.0, 10.0, 50.0],
                   help="marginal concentrations (default: 1,10,50)")
    p.add_argument("--a0b0-values", type=_pair_list,
                   default=[(0.5, 0.5), (1.0, 1.0), (2.0, 2.0)],
                   help="Beta prior pairs (default: 0.5:0.5,1:1,2:2)")
    _add_common(p, ("ctbf",), METHODS)
    return parser


def _add_sim_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="standard",
                   help="sample size, replications and MCMC settings "
                   "(default: standard = n 250, R 50)")
    p.add_argument("--scenarios", default=",".join(KINDS),
                   help="comma-separated subset of %s" % ",".join(KINDS))
    p.add_argument("--n", type=_positive(int), default=None,
                   help="override the preset sample size")
    p.add_argument("--replications", type=_positive(int), default=None,
                   help="override the preset replications per arm")
    p.add_argument("--output-dir", default="sim-out",
                   help="directory for the TSV outputs (default: sim-out)")


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def _check_consistency(parser, args):
    methods = set(args.methods)
    groups = ((_CTBF_FLAGS, {"ctbf", "chisq"}, "ctbf or chisq"),
              (_MIXMOD_FLAGS, {"mixmod"}, "mixmod"),
              (_MI_FLAGS, {"mi"}, "mi"))
    for flags, needed, label in groups:
        if methods & needed:
            continue
        for f in flags:
            if getattr(args, f, None) is not None:
                parser.error("--%s requires method %s"
                             % (f.replace("_", "-"), label))
    if args.a is not None and (args.alpha_rule or "constant") != "total":
        parser.error("--a requires --alpha-rule total")


def _val(args, name):
    v = getattr(args, name, None)
    return DEFAULTS[name] if v is None else v


def plan_from_args(args, mcmc=None):
    """Resolve parsed arguments into a ScreenPlan."""
    mcmc = mcmc or McmcSettings()
    mcmc = McmcSettings(
        args.n_burn if args.n_burn is not None else mcmc.n_burn,
        args.n_save if args.n_save is not None else mcmc.n_save,
        args.thin if args.thin is not None else mcmc.thin)
    ctbf_prior = replace(_CTBF_PRIOR, c=float(_val(args, "c0")))
    cp = tuple(float(v) for v in _val(args, "c1_prior"))
    mix = tuple(replace(mixmod_config(d), c_prior=cp, c=cp[0] / cp[1])
                for d in (1, 1, 2))
    ctbf = CtbfConfig(rule=_val(args, "alpha_rule"),
                      alpha=float(_val(args, "alpha")),
                      a=float(_val(args, "a")))
    ens = EnsembleConfig(float(_val(args, "a0")), float(_val(args, "b0")),
                         float(_val(args, "eta")))
    variables = getattr(args, "variables", None)
    if variables:
        variables = tuple(v.strip() for v in variables.split(",") if v.strip())
    return ScreenPlan(
        methods=tuple(args.methods),
        min_rows=_val(args, "min_rows") if hasattr(args, "min_rows") else
        DEFAULTS["min_rows"],
        mcmc=mcmc, ctbf_prior=ctbf_prior, mixmod_priors=mix, ctbf=ctbf,
        ensemble=ens, mi=MiConfig(k=int(_val(args, "k"))),
        workers=args.workers or (os.cpu_count() or 1),
        seed=args.seed if args.seed is not None else _default_seed(),
        variables=variables or None)


def parse_args(argv=None):
    """Parse and validate; returns ``(args, plan)``.  Exits with status 2
    on usage errors."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        raise SystemExit(EXIT_FATAL)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(EXIT_FATAL)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    _check_consistency(sub, args)
    mcmc = PRESETS[args.preset].mcmc if hasattr(args, "preset") else None
    try:
        plan = plan_from_args(args, mcmc)
    except DomainError as exc:
        sub.error(str(exc))
    return args, plan


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _progress(args):
    if not args.verbose:
        return None
    start = time.perf_counter()

    def say(msg):
        print("[%7.1fs] %s" % (time.perf_counter() - start, msg),
              file=sys.stderr, flush=True)
    return say


def _write_meta(path, args, plan, elapsed, extra=None):
    meta = {
        "command": args.command,
        "argv": getattr(args, "_argv", None),
        "version": __version__,
        "python": platform.python_version(),
        "seed": plan.seed,
        "plan": plan.to_dict(),
        "workers": plan.workers,
        "wall_clock_seconds": round(elapsed, 3),
    }
    meta.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_screen(args, plan):
    t0 = time.perf_counter()
    say = _progress(args)
    data = load_csv(args.input, id_column=args.id_column)
    if say:
        say("loaded %d rows x %d variables" % (data.n, data.p))
    results = screen(data, plan, progress=say)
    persist_results(results, args.output, args.format, plan=plan)
    meta_path = args.output + ".meta.json"
    n_err = sum(CHAIN_ERROR in r.status for r in results)
    _write_meta(meta_path, args, plan, time.perf_counter() - t0, {
        "input": os.path.abspath(args.input), "n_pairs": len(results),
        "n_skipped": sum(r.skipped for r in results), "n_failed": n_err})
    print(args.output)
    print(meta_path)
    return EXIT_PARTIAL if n_err else EXIT_OK


def _cells(args):
    preset = PRESETS[args.preset]
    kinds = [k.strip() for k in args.scenarios.split(",") if k.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise DomainError("unknown scenario(s): %s" % ", ".join(bad))
    return scenario_grid(args.n or preset.n,
                         args.replications or preset.replications, kinds)


def cmd_simulate(args, plan):
    t0 = time.perf_counter()
    say = _progress(args)
    cells = _cells(args)
    os.makedirs(args.output_dir, exist_ok=True)
    allres, written = [], []
    for method in plan.methods:
        res = power_study(method, cells, plan, progress=say)
        allres.extend(res)
        path = os.path.join(args.output_dir, "scores_%s.tsv" % method)
        write_scores(res, path)
        written.append(path)
    return _finish_sim(args, plan, allres, written, t0)


def cmd_sensitivity(args, plan):
    t0 = time.perf_counter()
    say = _progress(args)
    cells = _cells(args)
    os.makedirs(args.output_dir, exist_ok=True)
    if args.sweep == "a0-b0":
        method = "mixmod"
        overrides = [{"a0": a, "b0": b} for a, b in args.a0b0_values]
    else:
        method = "ctbf"
        key, vals = (("alpha", args.alpha_values) if args.sweep == "alpha-c0"
                     else ("a", args.a_values))
        overrides = [{key: v, "c0": c} for v in vals
                     for c in args.c0_values]
    for o in overrides:
        apply_overrides(plan, **o)  # validate before running anything
    res = sensitivity_study(method, cells, overrides, plan, progress=say)
    return _finish_sim(args, plan, res, [], t0, {"sweep": args.sweep,
                                                 "overrides": overrides})


def _finish_sim(args, plan, res, written, t0, extra=None):
    summary = os.path.join(args.output_dir, "summary.tsv")
    timing = os.path.join(args.output_dir, "timing.tsv")
    write_summary(res, summary)
    write_timing(res, timing)
    meta_path = os.path.join(args.output_dir, "meta.json")
    failed = sum(c.n_failed for c in res)
    info = {"preset": args.preset, "n_failed_replications": failed}
    info.update(extra or {})
    _write_meta(meta_path, args, plan, time.perf_counter() - t0, info)
    for path in [summary, timing] + written + [meta_path]:
        print(path)
    return EXIT_PARTIAL if failed else EXIT_OK


COMMANDS = {"screen": cmd_screen, "simulate": cmd_simulate,
            "sensitivity": cmd_sensitivity}


def run(args, plan):
    """Dispatch a parsed command; returns the exit code."""
    try:
        return COMMANDS[args.command](args, plan)
    except (DomainError, OSError) as exc:
        print("dpscreen: error: %s" % exc, file=sys.stderr)
        return EXIT_FATAL


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, plan = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_FATAL
    args._argv = argv
    return run(args, plan)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
