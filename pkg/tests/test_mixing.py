"""Interpolation module: normalization, simplex invariants, differentiability."""

import numpy as np
import pytest

from afm import tensor as T
from afm.errors import ShapeError
from afm.grouping import AttentionOutput, GAParams, Group, attend, sample_groups
from afm.mixing import DEFAULT_EPSILON, interpolate
from afm.tensor import Tensor, backward


def make_batch(n=12, d=5, c=3, m=6, k=2, seed=0):
    rng = np.random.default_rng(seed)
    feats = Tensor(rng.standard_normal((n, d)), requires_grad=True)
    labels_int = rng.integers(0, c, size=n)
    labels = np.eye(c)[labels_int]
    groups = sample_groups(labels_int, m, k, rng=rng)
    params = GAParams(d, k, rng=np.random.default_rng(seed + 1))
    att = attend(feats, groups, params)
    return feats, labels, att, params


def test_interpolation_shapes():
    feats, labels, att, _ = make_batch()
    out = interpolate(feats, labels, att)
    assert out.features.values.shape == (6, 5)
    assert out.soft_labels.values.shape == (6, 3)
    assert out.weights.values.shape == (6, 2)
    assert len(out) == 6


def test_normalized_weights_sum_to_one():
    feats, labels, att, _ = make_batch(seed=3)
    out = interpolate(feats, labels, att)
    np.testing.assert_allclose(out.weights.values.sum(axis=1), 1.0, atol=1e-9)


def test_soft_labels_on_simplex():
    feats, labels, att, _ = make_batch(seed=4)
    out = interpolate(feats, labels, att)
    s = out.soft_labels.values
    assert s.min() >= 0.0
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)


def test_features_are_member_convex_combinations():
    # reconstruct the K=2 coefficients from the interpolation and members
    feats, labels, att, _ = make_batch(seed=5)
    out = interpolate(feats, labels, att)
    for item, g in zip(out, out.groups):
        a = feats.values[g.members[0]]
        b = feats.values[g.members[1]]
        w = item.normalized_weights
        np.testing.assert_allclose(item.feature, w[0] * a + w[1] * b, atol=1e-9)
        assert -1e-9 <= w[0] <= 1 + 1e-9


def test_same_weights_blend_features_and_labels():
    feats, labels, att, _ = make_batch(seed=6)
    out = interpolate(feats, labels, att)
    for item, g in zip(out, out.groups):
        w = item.normalized_weights
        expect = w[0] * labels[g.members[0]] + w[1] * labels[g.members[1]]
        np.testing.assert_allclose(item.soft_label, expect, atol=1e-9)


def test_intra_group_soft_label_stays_one_hot():
    feats = Tensor(np.random.default_rng(0).standard_normal((4, 3)))
    labels = np.eye(2)[[1, 1, 0, 0]]
    groups = [Group((0, 1), (1, 1))]
    att = AttentionOutput(weights=T.constant(np.array([[0.3, 0.9]])), groups=groups)
    out = interpolate(feats, labels, att)
    np.testing.assert_allclose(out.soft_labels.values, [[0.0, 1.0]], atol=1e-9)


def test_scale_invariance_of_raw_weights():
    # multiplying both raw weights by a positive constant changes nothing
    feats = Tensor(np.random.default_rng(1).standard_normal((4, 3)))
    labels = np.eye(2)[[0, 1, 0, 1]]
    groups = [Group((0, 1), (0, 1)), Group((2, 3), (0, 1))]
    raw = np.array([[0.2, 0.6], [0.9, 0.1]])
    out1 = interpolate(feats, labels, AttentionOutput(T.constant(raw), groups),
                       epsilon=0.0)
    out2 = interpolate(feats, labels, AttentionOutput(T.constant(raw * 7.0), groups),
                       epsilon=0.0)
    np.testing.assert_allclose(out1.features.values, out2.features.values, atol=1e-12)


def test_epsilon_guard_bounds_deviation():
    # default epsilon must keep weight sums within 1e-9 of 1 even for small raws
    feats = Tensor(np.random.default_rng(2).standard_normal((2, 3)))
    labels = np.eye(2)[[0, 1]]
    groups = [Group((0, 1), (0, 1))]
    raw = np.array([[1e-3, 1e-3]])
    out = interpolate(feats, labels, AttentionOutput(T.constant(raw), groups))
    assert abs(out.weights.values.sum() - 1.0) < 1e-9
    assert DEFAULT_EPSILON <= 1e-9


def test_negative_epsilon_rejected():
    feats, labels, att, _ = make_batch()
    with pytest.raises(ShapeError):
        interpolate(feats, labels, att, epsilon=-1.0)


def test_label_shape_mismatch():
    feats, labels, att, _ = make_batch()
    with pytest.raises(ShapeError):
        interpolate(feats, labels[:-1], att)


def test_gradients_flow_to_features_and_attention():
    feats, labels, att, params = make_batch(seed=8)
    out = interpolate(feats, labels, att)
    backward(T.sum_reduce(T.mul(out.features, out.features)))
    assert feats.grad is not None and np.abs(feats.grad).sum() > 0
    att2_w = dict(params.parameters())["ga.att2.weight"]
    assert att2_w.grad is not None and np.abs(att2_w.grad).sum() > 0


def test_k3_interpolation():
    feats, labels, att, _ = make_batch(n=15, m=4, k=3, seed=9)
    out = interpolate(feats, labels, att)
    assert out.weights.values.shape == (4, 3)
    np.testing.assert_allclose(out.weights.values.sum(axis=1), 1.0, atol=1e-9)


def test_simplex_bulk():
    # a larger randomized sweep of the invariants
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(4, 20))
        feats, labels, att, _ = make_batch(n=n, m=n, seed=100 + trial)
        out = interpolate(feats, labels, att)
        s = out.soft_labels.values
        assert s.min() >= -1e-12
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)
