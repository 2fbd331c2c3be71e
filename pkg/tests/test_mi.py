"""k-nearest-neighbour mutual information."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import digamma

from dpscreen.mi import MiConfig, knn_mi, knn_mi_result, permutation_threshold
from dpscreen.stats import DomainError

from oracles import gaussian_mi


def _ksg_brute(x, y, k):
    """Direct transcription of the counting estimator."""
    x = (x - x.mean()) / x.std(ddof=1)
    y = (y - y.mean()) / y.std(ddof=1)
    n = x.size
    total = 0.0
    for i in range(n):
        d = np.maximum(np.abs(x - x[i]), np.abs(y - y[i]))
        d[i] = np.inf
        eps = np.sort(d)[k - 1]
        nx = np.sum(np.abs(x - x[i]) < eps) - 1
        ny = np.sum(np.abs(y - y[i]) < eps) - 1
        total += digamma(nx + 1) + digamma(ny + 1)
    return digamma(k) + digamma(n) - total / n


def _bvn(rho, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    return x, rho * x + np.sqrt(1 - rho ** 2) * rng.standard_normal(n)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(k=0), dict(k=2.5), dict(variant=3)])
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            MiConfig(**kw)

    def test_default_k(self):
        assert MiConfig().k == 20


class TestEstimator:
    @pytest.mark.parametrize("k", [1, 3, 20])
    def test_matches_brute_force(self, k):
        x, y = _bvn(0.5, 150, 1)
        assert knn_mi(x, y, MiConfig(k=k)) == pytest.approx(
            _ksg_brute(x, y, k), abs=1e-10)

    def test_gaussian_oracle(self):
        x, y = _bvn(0.9, 2000, 2)
        assert knn_mi(x, y) == pytest.approx(gaussian_mi(0.9), abs=0.1)

    @pytest.mark.parametrize("variant", [1, 2])
    def test_variants_agree_roughly(self, variant):
        x, y = _bvn(0.6, 800, 3)
        assert knn_mi(x, y, MiConfig(variant=variant)) == pytest.approx(
            gaussian_mi(0.6), abs=0.1)

    def test_independent_uniforms(self):
        vals = []
        for seed in range(20):
            rng = np.random.default_rng([9, seed])
            vals.append(knn_mi(rng.random(500), rng.random(500)))
        assert abs(np.mean(vals)) < 0.1

    @given(st.integers(0, 10_000))
    def test_symmetric(self, seed):
        x, y = _bvn(0.3, 60, seed)
        assert knn_mi(x, y, MiConfig(k=5)) == knn_mi(y, x, MiConfig(k=5))

    @given(st.integers(0, 10_000))
    def test_permutation_equivariant(self, seed):
        x, y = _bvn(0.4, 60, seed)
        perm = np.random.default_rng(seed + 1).permutation(60)
        assert knn_mi(x, y, MiConfig(k=5)) == knn_mi(x[perm], y[perm],
                                                     MiConfig(k=5))

    @pytest.mark.parametrize("scale,shift", [(3.0, 1.0), (0.01, -5.0)])
    def test_affine_invariant(self, scale, shift):
        x, y = _bvn(0.5, 200, 4)
        assert knn_mi(scale * x + shift, y) == pytest.approx(knn_mi(x, y),
                                                             abs=1e-9)

    def test_monotone_transform(self):
        diffs = []
        for seed in range(20):
            x, y = _bvn(0.7, 1000, [5, seed])
            diffs.append(knn_mi(x, y) - knn_mi(np.exp(x), y))
        assert abs(np.mean(diffs)) <= 0.05

    def test_ties_jittered(self):
        # every point appears five times, so some 3-NN distances are zero
        x = np.repeat(np.arange(10.0), 5)
        y = np.repeat(np.arange(10.0) % 3, 5)
        res = knn_mi_result(x, y, MiConfig(k=3))
        assert res.jittered
        assert np.isfinite(res.mi)
        assert knn_mi_result(x, y, MiConfig(k=3)).mi == res.mi

    def test_no_jitter_for_continuous(self):
        x, y = _bvn(0.1, 100, 6)
        assert not knn_mi_result(x, y).jittered

    def test_errors(self):
        with pytest.raises(DomainError):
            knn_mi(np.arange(20.0), np.arange(20.0))
        with pytest.raises(DomainError):
            knn_mi(np.arange(30.0), np.arange(29.0))
        with pytest.raises(DomainError):
            knn_mi(np.r_[np.arange(29.0), np.inf], np.arange(30.0))


class TestPermutationThreshold:
    def test_extreme_levels(self):
        x, y = _bvn(0.2, 80, 7)
        cfg = MiConfig(k=5)
        rng = np.random.default_rng(1)
        perms = [rng.permutation(80) for _ in range(25)]
        vals = [knn_mi(x, y[p], cfg) for p in perms]
        hi = permutation_threshold(x, y, cfg, 25, 0.0, np.random.default_rng(1))
        lo = permutation_threshold(x, y, cfg, 25, 1.0, np.random.default_rng(1))
        assert hi == pytest.approx(max(vals))
        assert lo == pytest.approx(min(vals))

    def test_identical_pair_exceeds(self):
        x = np.random.default_rng(8).standard_normal(100)
        thr = permutation_threshold(x, x, MiConfig(k=5), 20, 0.05, 0)
        assert knn_mi(x, x, MiConfig(k=5)) > thr

    def test_errors(self):
        x = np.arange(30.0)
        with pytest.raises(DomainError):
            permutation_threshold(x, x, n_perm=10)
        with pytest.raises(DomainError):
            permutation_threshold(x, x, MiConfig(k=3), level=1.5)
