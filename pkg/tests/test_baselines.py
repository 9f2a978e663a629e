"""Baseline components: channel histograms, the shallow pairwise classifier,
the softmax layout classifier, and the entropy indicator."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from channelorder.baselines import (
    ShallowPairModel,
    SoftmaxOrderNet,
    channel_histogram,
    shallow_order_from_pairs,
    shallow_pair_classify,
    softmax_classify,
    softmax_entropy,
)
from channelorder.scorer import zero_parameters

LN6 = math.log(6)


class TestChannelHistogram:
    def test_constant_zero_in_first_bin(self):
        hist = channel_histogram(np.zeros((8, 8), dtype=np.float32), 256)
        assert hist[0] == 1.0
        assert hist[1:].sum() == 0.0

    def test_constant_one_in_last_bin(self):
        hist = channel_histogram(np.ones((8, 8), dtype=np.float32), 256)
        assert hist[255] == 1.0

    def test_half_and_half(self):
        plane = np.zeros((2, 8), dtype=np.float32)
        plane[1] = 1.0
        hist = channel_histogram(plane, 256)
        assert hist[0] == 0.5 and hist[255] == 0.5

    @given(st.integers(2, 64), st.integers(1, 50))
    def test_mass_conservation(self, bins, n):
        rng = np.random.default_rng(n)
        plane = rng.random((n, 3)).astype(np.float32)
        hist = channel_histogram(plane, bins)
        assert hist.sum() == pytest.approx(1.0, abs=1e-9)
        assert (hist >= 0).all()

    def test_rejects_empty_and_bad_bins(self):
        with pytest.raises(ValueError):
            channel_histogram(np.zeros((0, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            channel_histogram(np.zeros((4, 4), dtype=np.float32), bins=1)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            channel_histogram(np.full((4, 4), 1.5, dtype=np.float32))


class TestShallowPairModel:
    def test_zero_weights_give_exactly_half(self):
        torch.manual_seed(0)
        model = zero_parameters(ShallowPairModel(bins=16))
        rng = np.random.default_rng(0)
        h = rng.random(16)
        h /= h.sum()
        assert shallow_pair_classify(h, h, model) == 0.5

    def test_bin_mismatch_rejected(self):
        torch.manual_seed(0)
        model = ShallowPairModel(bins=16)
        with pytest.raises(ValueError):
            shallow_pair_classify(np.zeros(16), np.zeros(8), model)
        with pytest.raises(ValueError):
            shallow_pair_classify(np.zeros(8), np.zeros(8), model)

    def test_probability_in_unit_interval(self):
        torch.manual_seed(1)
        model = ShallowPairModel(bins=16)
        rng = np.random.default_rng(1)
        for _ in range(10):
            hi, hj = rng.random(16), rng.random(16)
            p = shallow_pair_classify(hi / hi.sum(), hj / hj.sum(), model)
            assert 0.0 < p < 1.0


class TestShallowOrderAssembly:
    def test_consistent_pairs_assemble_directly(self):
        # p12, p13, p23 all confident "first precedes second" -> RGB
        assert shallow_order_from_pairs(0.9, 0.9, 0.8).name == "RGB"
        # full reversal -> BGR
        assert shallow_order_from_pairs(0.1, 0.1, 0.2).name == "BGR"
        # plane2 first, then plane1, then plane3 -> layout GRB
        assert shallow_order_from_pairs(0.2, 0.8, 0.9).name == "GRB"

    def test_cyclic_votes_resolve_deterministically(self):
        a = shallow_order_from_pairs(0.9, 0.1, 0.9)
        b = shallow_order_from_pairs(0.9, 0.1, 0.9)
        assert a == b

    def test_matches_tally_ranking(self):
        rng = np.random.default_rng(2)
        from channelorder.detectors import predict_order

        for _ in range(100):
            p12, p13, p23 = rng.random(3)
            tallies = (p12 + p13, (1 - p12) + p23, (1 - p13) + (1 - p23))
            assert (
                shallow_order_from_pairs(p12, p13, p23)
                == predict_order(tallies).permutation
            )


class TestSoftmaxOrderNet:
    def test_distribution_sums_to_one(self):
        torch.manual_seed(0)
        model = SoftmaxOrderNet(n_classes=6, widths=(4, 6, 8, 10))
        img = np.random.default_rng(0).random((16, 16, 3)).astype(np.float32)
        probs = softmax_classify(img, model)
        assert probs.shape == (6,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert (probs >= 0).all()

    def test_two_class_variant(self):
        torch.manual_seed(1)
        model = SoftmaxOrderNet(n_classes=2, widths=(4, 6, 8, 10))
        assert model.classes == ("RGB", "BGR")
        img = np.random.default_rng(1).random((16, 16, 3)).astype(np.float32)
        assert softmax_classify(img, model).shape == (2,)

    def test_rejects_other_class_counts(self):
        with pytest.raises(ValueError):
            SoftmaxOrderNet(n_classes=3)


class TestSoftmaxEntropy:
    def test_uniform_attains_ln6(self):
        assert softmax_entropy(np.full(6, 1 / 6)) == pytest.approx(LN6, abs=1e-9)

    def test_one_hot_is_zero(self):
        p = np.zeros(6)
        p[2] = 1.0
        assert softmax_entropy(p) == 0.0

    def test_two_mass_points(self):
        p = np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0])
        assert softmax_entropy(p) == pytest.approx(math.log(2), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = rng.random(6)
            p /= p.sum()
            h = softmax_entropy(p)
            assert 0.0 <= h <= LN6 + 1e-12

    def test_invariant_under_permutation(self):
        rng = np.random.default_rng(4)
        p = rng.random(6)
        p /= p.sum()
        for _ in range(10):
            q = rng.permutation(p)
            assert softmax_entropy(q) == pytest.approx(softmax_entropy(p), rel=1e-12)

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            softmax_entropy(np.array([0.5, 0.2]))
        with pytest.raises(ValueError):
            softmax_entropy(np.array([-0.5, 1.5]))
