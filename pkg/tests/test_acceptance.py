"""Acceptance criteria, each run at its stated size and tolerance.

Every test records one PASS/FAIL line, repeated in the terminal summary.
The suite takes roughly half an hour on a single core.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats as sps

from dpscreen.ctbf import (ContingencyTable, log_bf, log_marginal_m1,
                           posterior_prob_dep)
from dpscreen.dpm import DpmConfig, McmcSettings, mixmod_config, run_chain
from dpscreen.mi import knn_mi
from dpscreen.mixmod import (EnsembleConfig, PredictiveValues, estimate_pi,
                             pi_log_posterior_grid)
from dpscreen.screen import Dataset, ScreenPlan, screen
from dpscreen.simulate import ScenarioConfig, power_study

from fixtures.make_fixtures import CSV
from oracles import (batch_se, coclustering_probs, gaussian_mi,
                     log_bf_oracle, partition_posterior)

WORKERS = os.cpu_count() or 1

pytestmark = pytest.mark.acceptance


def test_ac01_bayes_factor_oracle(ac_report):
    rng = np.random.default_rng(2001)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        kx, ky = rng.integers(1, 5, 2)
        n = rng.integers(1, 31)
        t = rng.multinomial(n, np.full(kx * ky, 1 / (kx * ky))).reshape(kx, ky)
        worst = max(worst, abs(log_bf(ContingencyTable(t))
                               - log_bf_oracle(t, 0.5)))
    diag = log_bf(ContingencyTable([[10, 0], [0, 10]]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and abs(diag + 11.70) <= 0.01 and elapsed < 1
    assert ac_report("AC1", ok, "max |diff| %.1e, log BF diag %.4f, %.2fs"
                     % (worst, diag, elapsed))


def test_ac02_normalization(ac_report):
    t0 = time.perf_counter()
    total = 0.0
    n = 5
    for a in range(n + 1):
        for b in range(n + 1 - a):
            for c in range(n + 1 - a - b):
                t = ContingencyTable([[a, b], [c, n - a - b - c]])
                total += np.exp(log_marginal_m1(t))
    elapsed = time.perf_counter() - t0
    ok = abs(total - 1) <= 1e-8 and elapsed < 1
    assert ac_report("AC2", ok, "sum %.12f, %.3fs" % (total, elapsed))


def test_ac03_single_cluster_margin(ac_report):
    rng = np.random.default_rng(2003)
    worst = 0.0
    for _ in range(1000):
        k = rng.integers(1, 8)
        t = rng.integers(0, 20, (1, k))
        t[0, rng.integers(k)] += 1
        if rng.random() < 0.5:
            t = t.T
        worst = max(worst, abs(posterior_prob_dep(log_bf(ContingencyTable(t)))
                               - 0.5))
    assert ac_report("AC3", worst <= 1e-12, "max |p - 0.5| %.1e" % worst)


def test_ac04_partition_enumeration(ac_report):
    x = np.array([-0.8, 0.3, 1.9])
    cfg = dict(c=1.5, mu0=0.0, k0=0.5, nu=3.0, psi=1.0)
    parts, probs = partition_posterior(x, **cfg)
    exact = coclustering_probs(parts, probs)
    t0 = time.perf_counter()
    trace, _ = run_chain(x, DpmConfig(
        mu0_prior_var=None, k0_prior=None, shape_offset=0.0, psi_prior=None,
        **cfg), McmcSettings(1000, 200_000, 1), rng=2004)
    elapsed = time.perf_counter() - t0
    lab = trace.labels
    zs = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        same = lab[:, i] == lab[:, j]
        zs.append(abs(same.mean() - exact[i, j]) / batch_se(same))
    ok = max(zs) < 3 and elapsed < 120
    assert ac_report("AC4", ok, "max |z| %.2f over 3 pairs, %.1fs"
                     % (max(zs), elapsed))


def test_ac05_density_estimate(ac_report):
    x = np.random.default_rng(2005).standard_normal(500)
    z = np.linspace(-10, 10, 4001)
    t0 = time.perf_counter()
    _, pred = run_chain(x, mixmod_config(1), McmcSettings(), z, rng=2005)
    elapsed = time.perf_counter() - t0
    dens = pred.density
    cdf = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2
                                         * np.diff(z))])
    ks = np.max(np.abs(cdf - sps.norm.cdf(z)))
    ok = ks <= 0.05 and elapsed < 120
    assert ac_report("AC5", ok, "KS %.4f, %.1fs" % (ks, elapsed))


def test_ac06_ensemble_oracle(ac_report):
    worst = 0.0
    for a0, b0 in ((0.5, 0.5), (1.0, 1.0)):
        cfg = EnsembleConfig(a0=a0, b0=b0)
        for n in (10, 100):
            z, ninf = np.zeros(n), np.full(n, -np.inf)
            for pv, exact in ((PredictiveValues(z, ninf, z),
                               (a0 + n) / (a0 + b0 + n)),
                              (PredictiveValues(ninf, z, z),
                               a0 / (a0 + b0 + n))):
                got = estimate_pi(pi_log_posterior_grid(pv, cfg)).pi_hat
                worst = max(worst, abs(got - exact) / cfg.eta)
    assert ac_report("AC6", worst <= 2, "max error %.3f eta" % worst)


def test_ac07_power(ac_report):
    plan = ScreenPlan(seed=2007, workers=WORKERS)
    t0 = time.perf_counter()
    normal = power_study("ctbf", [ScenarioConfig("normal", r, 250, 20)
                                  for r in (0.9, 0.0)], plan)
    sin = [power_study(m, [ScenarioConfig("sinusoidal", 1.0, 250, 20)],
                       plan)[0] for m in ("ctbf", "mixmod")]
    circ = [power_study(m, [ScenarioConfig("circular", 1.0, 250, 20)],
                        plan)[0] for m in ("mi", "ctbf")]
    elapsed = time.perf_counter() - t0
    failed = sum(c.n_failed for c in normal + sin + circ)
    auc = [c.auc for c in normal + sin + circ]
    ok = (auc[0] >= 0.95 and 0.35 <= auc[1] <= 0.65 and auc[2] >= 0.9
          and auc[3] >= 0.9 and auc[4] >= auc[5] and failed == 0
          and elapsed <= 1800)
    assert ac_report(
        "AC7", ok, "ctbf rho .9 %.3f, rho 0 %.3f; sinusoidal ctbf %.3f, "
        "mixmod %.3f; circular mi %.3f vs ctbf %.3f; %d failed; %.0fs on "
        "%d worker(s)" % (*auc, failed, elapsed, WORKERS))


def test_ac08_mutual_information(ac_report):
    rng = np.random.default_rng(2008)
    x, e = rng.standard_normal((2, 2000))
    y = 0.9 * x + np.sqrt(1 - 0.81) * e
    mi = knn_mi(x, y)
    ind = knn_mi(*rng.standard_normal((2, 2000)))
    ok = abs(mi - gaussian_mi(0.9)) <= 0.1 and abs(ind) <= 0.1
    assert ac_report("AC8", ok, "rho .9 %.4f (exact %.4f), independent %.4f"
                     % (mi, gaussian_mi(0.9), ind))


def _cli_screen(out, workers):
    proc = subprocess.run(
        [sys.executable, "-m", "dpscreen.cli", "screen", "--input", CSV,
         "--output", str(out), "--id-column", "id", "--seed", "9",
         "--workers", str(workers)], capture_output=True, text=True)
    assert proc.returncode in (0, 1), proc.stderr
    return out.read_bytes()


def test_ac09_determinism(ac_report, tmp_path):
    runs = [_cli_screen(tmp_path / ("r%d.tsv" % i), w)
            for i, w in enumerate((1, 1, 8))]
    n_rows = runs[0].count(b"\n") - 1
    ok = runs[0] == runs[1] == runs[2] and n_rows == 190
    assert ac_report("AC9", ok, "%d pairs, runs 1/1/8 workers identical: %s"
                     % (n_rows, runs[0] == runs[1] == runs[2]))


def test_ac10_throughput(ac_report):
    rng = np.random.default_rng(2010)
    n, p = 200, 100
    base = rng.standard_normal((n, 10))
    load = rng.standard_normal((10, p)) * (rng.random((10, p)) < 0.2)
    data = base @ load + rng.standard_normal((n, p))
    ds = Dataset.from_columns({"v%03d" % j: data[:, j] for j in range(p)})
    plan = ScreenPlan(methods=("ctbf",), seed=2010, workers=WORKERS)
    t0 = time.perf_counter()
    res = screen(ds, plan)
    elapsed = time.perf_counter() - t0
    done = sum(r.p_dep is not None for r in res)
    ok = len(res) == 4950 and done == 4950 and elapsed <= 1200
    assert ac_report("AC10", ok, "%d/%d pairs scored in %.0fs on %d "
                     "worker(s)" % (done, len(res), elapsed, WORKERS))
