"""Group sampling, the attention net, and the pure-noisy-group ratio."""

from fractions import Fraction

import numpy as np
import pytest

from afm import tensor as T
from afm.errors import ConfigError, ShapeError
from afm.grouping import (GAParams, Group, attend, member_selectors,
                          pure_noisy_group_ratio, sample_groups)
from afm.tensor import backward


def labels_balanced(n, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, c, size=n)


def test_sample_groups_basic_shape():
    groups = sample_groups(labels_balanced(20), 7, 3, rng=np.random.default_rng(1))
    assert len(groups) == 7
    for g in groups:
        assert len(g.members) == 3
        assert len(set(g.members)) == 3  # distinct within a group


def test_sample_groups_two_of_two():
    groups = sample_groups(np.array([0, 1]), 1, 2, rng=np.random.default_rng(0))
    assert sorted(groups[0].members) == [0, 1]


def test_sample_groups_all_same_label_intra():
    groups = sample_groups(np.zeros(8, dtype=int), 5, 2,
                           rng=np.random.default_rng(0))
    assert all(g.kind == "intra" for g in groups)


def test_sample_groups_deterministic():
    a = sample_groups(labels_balanced(30), 10, 2, rng=np.random.default_rng(9))
    b = sample_groups(labels_balanced(30), 10, 2, rng=np.random.default_rng(9))
    assert [g.members for g in a] == [g.members for g in b]


def test_sample_groups_fixed_ratio():
    labels = np.array([0] * 10 + [1] * 10)
    groups = sample_groups(labels, 10, 2, "fixed-ratio", 0.3,
                           rng=np.random.default_rng(2))
    kinds = [g.kind for g in groups]
    assert kinds.count("intra") == 3
    assert kinds.count("inter") == 7


def test_sample_groups_rejects_bad_args():
    with pytest.raises(ConfigError):
        sample_groups(np.array([0]), 1, 2, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        sample_groups(labels_balanced(10), 3, 2, "fixed-ratio", None,
                      rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        sample_groups(labels_balanced(10), 3, 2, "bogus",
                      rng=np.random.default_rng(0))


def test_group_kind():
    assert Group((0, 1), (2, 2)).kind == "intra"
    assert Group((0, 1), (0, 2)).kind == "inter"


def test_member_selectors_gather():
    groups = [Group((2, 0), (0, 0)), Group((1, 2), (0, 0))]
    sels = member_selectors(groups, 3, 2)
    feats = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(sels[0] @ feats, feats[[2, 1]])
    np.testing.assert_array_equal(sels[1] @ feats, feats[[0, 2]])


def test_member_selectors_bad_index():
    with pytest.raises(ShapeError):
        member_selectors([Group((0, 5), (0, 0))], 3, 2)


@pytest.mark.parametrize("interaction", ["concat", "sum", "mul"])
@pytest.mark.parametrize("projections", ["distinct", "shared", "none"])
def test_attend_weight_shape_and_range(interaction, projections):
    rng = np.random.default_rng(0)
    params = GAParams(6, 2, interaction, projections, rng)
    feats = T.constant(np.random.default_rng(1).standard_normal((10, 6)))
    groups = sample_groups(labels_balanced(10), 5, 2, rng=np.random.default_rng(2))
    out = attend(feats, groups, params)
    assert out.weights.values.shape == (5, 2)
    assert np.all(out.weights.values > 0.0)
    assert np.all(out.weights.values < 1.0)


def test_attend_gradients_reach_projections():
    params = GAParams(4, 2, "sum", "distinct", np.random.default_rng(0))
    feats = T.constant(np.random.default_rng(1).standard_normal((6, 4)))
    groups = sample_groups(labels_balanced(6), 3, 2, rng=np.random.default_rng(2))
    backward(T.sum_reduce(attend(feats, groups, params).weights))
    for name, p in params.parameters():
        if name.endswith("weight"):
            assert p.grad is not None and np.abs(p.grad).sum() > 0, name


def swap(groups):
    return [Group(g.members[::-1], g.labels[::-1]) for g in groups]


def test_order_invariance_sum_shared():
    # sum interaction with a shared projection is symmetric in member order
    params = GAParams(5, 2, "sum", "shared", np.random.default_rng(3))
    feats = T.constant(np.random.default_rng(4).standard_normal((8, 5)))
    groups = sample_groups(labels_balanced(8), 6, 2, rng=np.random.default_rng(5))
    w1 = attend(feats, groups, params).weights.values
    w2 = attend(feats, swap(groups), params).weights.values
    np.testing.assert_array_equal(w1, w2)  # bit-identical


def test_order_sensitivity_distinct_projections():
    params = GAParams(5, 2, "sum", "distinct", np.random.default_rng(3))
    feats = T.constant(np.random.default_rng(4).standard_normal((8, 5)))
    groups = sample_groups(labels_balanced(8), 6, 2, rng=np.random.default_rng(5))
    w1 = attend(feats, groups, params).weights.values
    w2 = attend(feats, swap(groups), params).weights.values
    assert np.abs(w1 - w2).max() > 1e-9


def test_attend_feature_dim_mismatch():
    params = GAParams(5, 2, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        attend(T.constant(np.zeros((4, 3))),
               [Group((0, 1), (0, 0))], params)


def test_gaparams_rejects_unknown_modes():
    with pytest.raises(ConfigError):
        GAParams(4, 2, interaction="avg")
    with pytest.raises(ConfigError):
        GAParams(4, 2, projections="tied")


def exact_ratio(n_noisy, n_total, k):
    r = Fraction(1)
    for t in range(k):
        r *= Fraction(n_noisy - t, n_total - t)
    return r


@pytest.mark.parametrize("n_noisy,n_total,k", [
    (200, 1000, 2), (400, 1000, 3), (1, 10, 1), (5, 5, 5), (3, 9, 2),
])
def test_pure_noisy_ratio_matches_exact_rational(n_noisy, n_total, k):
    got = pure_noisy_group_ratio(n_noisy, n_total, k)
    assert abs(got - float(exact_ratio(n_noisy, n_total, k))) < 1e-12


def test_pure_noisy_ratio_below_noise_rate():
    # grouping strictly shrinks the all-noisy fraction for K >= 2
    assert pure_noisy_group_ratio(200, 1000, 2) < 200 / 1000
    assert pure_noisy_group_ratio(200, 1000, 3) < pure_noisy_group_ratio(200, 1000, 2)


def test_pure_noisy_ratio_edge_cases():
    assert pure_noisy_group_ratio(1, 10, 2) == 0.0  # fewer noisy than K
    assert pure_noisy_group_ratio(0, 10, 1) == 0.0
    assert pure_noisy_group_ratio(10, 10, 3) == 1.0
    with pytest.raises(ConfigError):
        pure_noisy_group_ratio(11, 10, 2)


def test_pure_noisy_ratio_monte_carlo():
    # empirical all-noisy frequency within 3 binomial sigma of closed form
    n_total, n_noisy, k, trials = 50, 20, 2, 100_000
    noisy = np.zeros(n_total, dtype=bool)
    noisy[:n_noisy] = True
    rng = np.random.default_rng(12)
    groups = sample_groups(np.zeros(n_total, dtype=int), trials, k, rng=rng)
    hits = sum(all(noisy[i] for i in g.members) for g in groups)
    p = pure_noisy_group_ratio(n_noisy, n_total, k)
    sigma = np.sqrt(p * (1 - p) / trials)
    assert abs(hits / trials - p) < 3 * sigma
