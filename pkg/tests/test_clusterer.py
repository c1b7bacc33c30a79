import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhgnet.clusterer import (
    ClusterAssignment,
    FeatureSpace,
    assign,
    build_feature_space,
    single_pool,
)


def _loop_feature_space(patterns, x_hat, weights, total_weight, eps=1e-8):
    """Brute-force evaluation of the ratio features, straight from the rule."""
    b, t, n, _ = x_hat.shape
    p = len(patterns)
    acc = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            vals = []
            for bb in range(b):
                for tt in range(t):
                    num = float(patterns[j][bb, tt, i] @ weights[j][:, 0])
                    den = float(x_hat[bb, tt, i] @ total_weight[:, 0])
                    sign = 1.0 if den >= 0 else -1.0
                    den = sign * max(abs(den), eps)
                    vals.append(num / den)
            acc[i, j] = np.mean(vals)
    return acc


class TestFeatureSpace:
    def test_single_pattern_all_ones(self):
        rng = np.random.default_rng(0)
        x_hat = rng.normal(size=(2, 3, 4, 5)) + 2.0
        w = rng.normal(size=(5, 1))
        fs = build_feature_space([x_hat], x_hat, [w], w)
        assert np.allclose(fs.ratios, 1.0)
        assert np.allclose(fs.limits, [1.0])

    def test_homogeneity(self):
        rng = np.random.default_rng(1)
        x_hat = rng.normal(size=(1, 2, 3, 4)) + 3.0
        w = rng.normal(size=(4, 1))
        patterns = [x_hat.copy(), x_hat.copy()]
        fs1 = build_feature_space(patterns, x_hat, [w, w], w)
        fs2 = build_feature_space([0.5 * p for p in patterns], x_hat, [w, w], w)
        assert np.allclose(fs2.ratios, 0.5 * fs1.ratios)
        assert np.allclose(fs2.limits, 0.5 * fs1.limits)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        b, t, n, d, p = 2, 3, 3, 4, 2
        x_hat = rng.normal(size=(b, t, n, d))
        patterns = [rng.normal(size=(b, t, n, d)) for _ in range(p)]
        weights = [rng.normal(size=(d, 1)) for _ in range(p)]
        total = rng.normal(size=(d, 1))
        fs = build_feature_space(patterns, x_hat, weights, total)
        oracle = _loop_feature_space(patterns, x_hat, weights, total)
        assert np.max(np.abs(fs.ratios - oracle)) < 1e-12

    def test_limits_are_column_maxima(self):
        rng = np.random.default_rng(3)
        ratios = rng.normal(size=(7, 3))
        fs = FeatureSpace.from_ratios(ratios)
        assert np.array_equal(fs.limits, ratios.max(axis=0))


class TestAssign:
    def test_worked_example(self):
        fs = FeatureSpace.from_ratios(np.array([[0.2, 0.8], [0.9, 0.1], [0.5, 0.5]]))
        assert np.allclose(fs.limits, [0.9, 0.8])
        asg = assign(fs)
        assert np.array_equal(asg.types, [1, 0, 1])
        assert asg.pools == [[1], [0, 2]]
        assert np.array_equal(asg.permutation, [1, 0, 2])

    def test_single_pattern_single_pool(self):
        fs = FeatureSpace.from_ratios(np.random.default_rng(4).normal(size=(6, 1)))
        asg = assign(fs)
        assert np.array_equal(asg.types, np.zeros(6))
        assert asg.pools == [list(range(6))]

    def test_limit_attainer_gets_its_type(self):
        # node 0 attains the column-1 maximum, so its distance there is 0
        fs = FeatureSpace.from_ratios(np.array([[0.1, 0.9], [0.3, 0.2]]))
        asg = assign(fs)
        assert asg.types[0] == 1

    def test_tie_breaks_toward_lower_type(self):
        fs = FeatureSpace.from_ratios(np.array([[1.0, 1.0]]))
        asg = assign(fs)
        assert asg.types[0] == 0

    @given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=80, deadline=None)
    def test_partition_and_inverse(self, n, p, seed):
        ratios = np.random.default_rng(seed).normal(size=(n, p))
        asg = assign(FeatureSpace.from_ratios(ratios))
        flat = sorted(i for pool in asg.pools for i in pool)
        assert flat == list(range(n))
        assert all(pool == sorted(pool) for pool in asg.pools)
        assert np.array_equal(
            asg.inverse_permutation[asg.permutation], np.arange(n)
        )

    def test_linear_comparison_scaling(self):
        rng = np.random.default_rng(5)
        counts = {}
        for n in (1000, 2000):
            asg = assign(FeatureSpace.from_ratios(rng.normal(size=(n, 3))))
            counts[n] = asg.comparisons
        ratio = counts[2000] / counts[1000]
        assert 1.9 <= ratio <= 2.1

    def test_duplicate_row_is_monotone(self):
        rng = np.random.default_rng(6)
        ratios = rng.normal(size=(8, 3))
        base = assign(FeatureSpace.from_ratios(ratios))
        extended = np.vstack([ratios, ratios[4]])  # duplicates keep column maxima
        ext = assign(FeatureSpace.from_ratios(extended))
        assert np.array_equal(ext.types[:8], base.types)
        assert ext.types[8] == base.types[4]

    def test_single_pool_helper(self):
        asg = single_pool(5)
        assert asg.pools == [list(range(5))]
        assert np.array_equal(asg.permutation, np.arange(5))

    def test_empty_pools_permitted(self):
        asg = ClusterAssignment.from_types(np.array([2, 2, 2]), 3)
        assert asg.pools == [[], [], [0, 1, 2]]
        assert np.array_equal(asg.permutation, [0, 1, 2])
