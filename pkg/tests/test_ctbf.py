"""Contingency-table Bayes factor test."""

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dpscreen import ctbf
from dpscreen.ctbf import (ContingencyTable, CtbfConfig, build_table,
                           chi_square, dahl_partition, log_bf,
                           log_marginal_m0, log_marginal_m1,
                           p_dep_over_trace, posterior_prob_dep)
from dpscreen.dpm import McmcSettings, ctbf_marginal_config, run_chain
from dpscreen.stats import DomainError

from oracles import log_bf_oracle

tables = st.integers(1, 4).flatmap(lambda kx: st.integers(1, 4).flatmap(
    lambda ky: arrays(np.int64, (kx, ky), elements=st.integers(0, 8))
)).filter(lambda t: t.sum() > 0)

full_tables = tables.filter(lambda t: (t.sum(0) > 0).all()
                            and (t.sum(1) > 0).all())


def _mp_log_bf(table, alpha):
    """Arbitrary-precision evaluation of the four gamma-product terms."""
    mpmath.mp.dps = 40
    t = [[int(v) for v in row] for row in table]
    kx, ky = len(t), len(t[0])
    rows = [sum(r) for r in t]
    cols = [sum(t[k][l] for k in range(kx)) for l in range(ky)]
    n = sum(rows)
    al = mpmath.mpf(alpha)
    a = al * kx * ky
    lg = mpmath.loggamma
    val = lg(a) - lg(a + n)
    val += sum(lg(al * ky + m) - lg(al * ky) for m in rows)
    val += sum(lg(al * kx + m) - lg(al * kx) for m in cols)
    val += sum(lg(al) - lg(al + m) for r in t for m in r)
    return float(val)


class TestBuildTable:
    def test_examples(self):
        np.testing.assert_array_equal(
            build_table([1, 1, 2], [1, 2, 2]).counts, [[1, 1], [0, 1]])
        np.testing.assert_array_equal(build_table([1] * 7, [1] * 7).counts,
                                      [[7]])

    @given(st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5)),
                    min_size=1, max_size=40))
    def test_margins_are_histograms(self, pairs):
        lx, ly = map(np.array, zip(*pairs))
        t = build_table(lx, ly)
        assert t.n == len(pairs)
        np.testing.assert_array_equal(t.rows,
                                      np.bincount(lx, minlength=6)[1:lx.max()
                                                                   + 1])
        np.testing.assert_array_equal(t.cols,
                                      np.bincount(ly, minlength=6)[1:ly.max()
                                                                   + 1])

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            build_table([1, 2], [1])

    def test_bad_counts(self):
        with pytest.raises(DomainError):
            ContingencyTable([[1, -1]])
        with pytest.raises(DomainError):
            ContingencyTable([[0.5]])


class TestLogBayesFactor:
    def test_diagonal_example(self):
        t = ContingencyTable([[10, 0], [0, 10]])
        assert log_bf(t) == pytest.approx(-11.70, abs=0.01)
        assert log_bf(t) == pytest.approx(_mp_log_bf(t.counts, 0.5),
                                          abs=1e-10)
        assert 1 - posterior_prob_dep(log_bf(t)) == pytest.approx(8.3e-6,
                                                                  rel=1e-2)

    @given(tables)
    def test_matches_log_gamma_oracle(self, t):
        assert log_bf(ContingencyTable(t)) == pytest.approx(
            log_bf_oracle(t, 0.5), abs=1e-9)

    @given(full_tables.filter(lambda t: min(t.shape) > 1))
    def test_matches_mpmath(self, t):
        assert log_bf(ContingencyTable(t)) == pytest.approx(
            _mp_log_bf(t, 0.5), abs=1e-9)

    @given(tables, st.floats(0.1, 5.0))
    def test_total_mass_rule(self, t, a):
        cfg = CtbfConfig(rule="total", a=a)
        assert log_bf(ContingencyTable(t), cfg) == pytest.approx(
            log_bf_oracle(t, a / t.size), abs=1e-9)

    @given(tables)
    def test_difference_of_marginals(self, t):
        tab = ContingencyTable(t)
        assert log_bf(tab) == pytest.approx(
            log_marginal_m0(tab) - log_marginal_m1(tab), abs=1e-10)

    @given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 10_000))
    def test_single_margin_cancels(self, k, n, seed):
        counts = np.random.default_rng(seed).multinomial(n, np.ones(k) / k)
        for t in (counts[None, :], counts[:, None]):
            assert posterior_prob_dep(log_bf(ContingencyTable(t))) == 0.5

    @given(full_tables, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, t, r):
        rows = list(range(t.shape[0]))
        cols = list(range(t.shape[1]))
        r.shuffle(rows)
        r.shuffle(cols)
        base = log_bf(ContingencyTable(t))
        stat = chi_square(ContingencyTable(t)).statistic
        for other in (t[rows][:, cols], t.T):
            assert log_bf(ContingencyTable(other)) == pytest.approx(base,
                                                                    abs=1e-9)
            assert chi_square(ContingencyTable(other)).statistic == \
                pytest.approx(stat, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_normalisation(self, n):
        total = math.fsum(
            math.exp(log_marginal_m1(ContingencyTable([[a, b], [c, n - a - b
                                                                - c]])))
            for a, b, c in itertools.product(range(n + 1), repeat=3)
            if a + b + c <= n)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_monte_carlo_marginal(self):
        table = np.array([2, 1, 0, 3])
        alpha = 0.5
        rng = np.random.default_rng(2024)
        coef = math.factorial(6) / np.prod([math.factorial(v) for v in table])
        vals = []
        for _ in range(10):
            g = rng.standard_gamma(alpha, size=(1_000_000, 4))
            p = g / g.sum(axis=1, keepdims=True)
            vals.append(coef * np.prod(p ** table, axis=1))
        vals = np.concatenate(vals)
        est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(vals.size)
        exact = math.exp(log_marginal_m1(ContingencyTable(table.reshape(2,
                                                                        2))))
        assert abs(est - exact) < 3 * se

    def test_diagonal_beats_proportional(self):
        diag = ContingencyTable([[6, 0], [0, 6]])
        prop = ContingencyTable([[3, 3], [3, 3]])
        assert log_bf(diag) < log_bf(prop)

    def test_empty_margins(self):
        t = ContingencyTable([[3, 0, 1], [0, 0, 0], [1, 0, 4]])
        assert log_bf(t) == pytest.approx(log_bf_oracle(t.counts, 0.5),
                                          abs=1e-9)
        res = chi_square(t)
        assert res.dropped and res.dof == 1


class TestPosteriorProb:
    def test_values(self):
        assert posterior_prob_dep(0.0) == 0.5
        assert posterior_prob_dep(700.0) == pytest.approx(0.0, abs=1e-300)
        assert posterior_prob_dep(-700.0) == 1.0
        assert posterior_prob_dep(-11.70) == pytest.approx(0.9999917,
                                                           abs=1e-7)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            posterior_prob_dep(np.inf)


class TestTraceAverage:
    def test_constant_tables(self):
        lx = np.tile([1, 1, 2, 2, 1], (6, 1))
        ly = np.tile([1, 1, 2, 2, 2], (6, 1))
        b = log_bf(build_table(lx[0], ly[0]))
        res = p_dep_over_trace(lx, ly)
        assert res.p_dep == pytest.approx(1 / (1 + math.exp(b)), abs=1e-14)
        assert res.n_iter == 6

    def test_single_cluster_margin(self):
        rng = np.random.default_rng(0)
        lx = np.ones((20, 30), int)
        ly = rng.integers(1, 5, (20, 30))
        assert p_dep_over_trace(lx, ly).p_dep == 0.5

    @given(st.integers(0, 10_000))
    def test_mean_of_iterations(self, seed):
        rng = np.random.default_rng(seed)
        lx = rng.integers(1, 4, (5, 12))
        ly = rng.integers(1, 4, (5, 12))
        res = p_dep_over_trace(lx, ly)
        ref = [posterior_prob_dep(log_bf(build_table(
            ctbf.canonicalize_labels(a), ctbf.canonicalize_labels(b))))
            for a, b in zip(lx, ly)]
        np.testing.assert_allclose(res.probs, ref, rtol=1e-10)
        assert res.p_dep == pytest.approx(np.mean(res.probs))
        assert 0 <= res.p_dep <= 1

    def test_errors(self):
        with pytest.raises(DomainError, match="no saved"):
            p_dep_over_trace(np.zeros((0, 3), int), np.zeros((0, 3), int))
        with pytest.raises(DomainError, match="aligned"):
            p_dep_over_trace(np.ones((2, 3), int), np.ones((3, 3), int))

    def test_chi_square_attached(self):
        res = p_dep_over_trace([[1, 1, 2]], [[1, 2, 2]],
                               chi2_labels=([1, 1, 2], [1, 2, 2]))
        assert res.chi2.dof == 1

    @pytest.mark.slow
    def test_independence_null(self):
        cfg = ctbf_marginal_config()
        below = 0
        for rep in range(50):
            rng = np.random.default_rng([777, rep])
            x, y = rng.standard_normal((2, 250))
            tx, _ = run_chain(x, cfg, rng=rng)
            ty, _ = run_chain(y, cfg, rng=rng)
            below += p_dep_over_trace(tx, ty).p_dep < 0.8
        assert below >= 45


class TestChiSquare:
    def test_independent(self):
        t, p, dof = chi_square(ContingencyTable([[5, 5], [5, 5]]))
        assert (t, p, dof) == (0.0, 1.0, 1)

    def test_diagonal(self):
        t, p, dof = chi_square(ContingencyTable([[10, 0], [0, 10]]))
        assert t == pytest.approx(20.0)
        assert dof == 1
        assert p == pytest.approx(math.erfc(math.sqrt(10.0)), rel=1e-10)

    def test_one_by_one(self):
        assert tuple(chi_square(ContingencyTable([[4]]))) == (0.0, 1.0, 0)

    @given(full_tables)
    def test_transpose(self, t):
        a = chi_square(ContingencyTable(t))
        b = chi_square(ContingencyTable(t.T))
        assert a.statistic == pytest.approx(b.statistic, abs=1e-9)
        assert a.dof == b.dof


class TestDahl:
    def test_identical(self):
        lab = np.tile([2, 2, 1, 3], (4, 1))
        assert dahl_partition(lab).tolist() == [1, 1, 2, 3]

    def test_tie_goes_first(self):
        lab = np.array([[1, 1, 2], [1, 2, 2]])
        part, idx = dahl_partition(lab, return_index=True)
        assert idx == 0
        assert part.tolist() == [1, 1, 2]

    @given(st.integers(0, 10_000))
    def test_minimises_score(self, seed):
        rng = np.random.default_rng(seed)
        lab = rng.integers(1, 4, (int(rng.integers(1, 12)), 8))
        pbar = ctbf.coclustering_matrix(lab)
        scores = [np.sum(((r[:, None] == r[None, :]) - pbar) ** 2)
                  for r in lab]
        _, idx = dahl_partition(lab, return_index=True)
        assert scores[idx] <= min(scores) + 1e-12
        assert idx == int(np.flatnonzero(
            np.isclose(scores, min(scores), atol=1e-12))[0])

    def test_single_partition_prob(self):
        lab = np.tile([1, 1, 2, 2, 1, 2], (3, 1))
        p = ctbf.p_dep_single_partition(lab, lab)
        assert p == posterior_prob_dep(log_bf(build_table(lab[0], lab[0])))
