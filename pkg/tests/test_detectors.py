"""Decision rules: order prediction from scores, RGB restoration, RGB/BGR
pair detection, and the near-grayscale threshold rule."""

import math

import numpy as np
import pytest
import torch

from channelorder.detectors import (
    detect_bgr,
    detect_near_gray,
    predict_order,
    restore_rgb,
)
from channelorder.ranking import ChannelPermutation
from channelorder.scorer import PairScorer, zero_parameters


class TestPredictOrder:
    @pytest.mark.parametrize(
        "scores,expected",
        [
            ((0.9, 0.5, 0.1), "RGB"),
            ((0.1, 0.5, 0.9), "BGR"),
            ((0.5, 0.9, 0.1), "GRB"),
            ((0.9, 0.1, 0.5), "RBG"),
            ((0.1, 0.9, 0.5), "BRG"),
            ((0.5, 0.1, 0.9), "GBR"),
        ],
    )
    def test_sorting_rule(self, scores, expected):
        pred = predict_order(scores)
        assert pred.permutation.name == expected
        assert not pred.tie_flag

    def test_max_abs_delta(self):
        pred = predict_order((0.9, 0.5, 0.1))
        assert pred.max_abs_delta == pytest.approx(0.8)

    def test_ties_take_earlier_color_at_lower_index(self):
        pred = predict_order((0.4, 0.4, 0.4))
        assert pred.permutation.name == "RGB"
        assert pred.tie_flag
        pred = predict_order((0.1, 0.4, 0.4))
        assert pred.permutation.name == "BRG"
        assert pred.tie_flag

    def test_rank_order_invariance(self):
        # Any strictly increasing transform of all three scores keeps the
        # predicted layout.
        rng = np.random.default_rng(0)
        for _ in range(200):
            scores = tuple(rng.normal(0, 1, 3))
            base = predict_order(scores).permutation.name
            for transform in (math.exp, lambda v: 3 * v + 7, math.atan):
                moved = tuple(transform(v) for v in scores)
                assert predict_order(moved).permutation.name == base

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            predict_order((math.nan, 0.0, 1.0))


class TestRestoreRgb:
    def test_rgb_prediction_is_identity(self):
        img = np.random.default_rng(1).random((4, 4, 3)).astype(np.float32)
        pred = predict_order((0.9, 0.5, 0.1))
        assert np.array_equal(restore_rgb(img, pred), img)

    def test_bgr_prediction_swaps_outer_planes(self):
        img = np.random.default_rng(2).random((4, 4, 3)).astype(np.float32)
        pred = predict_order((0.1, 0.5, 0.9))
        out = restore_rgb(img, pred)
        assert np.array_equal(out[..., 0], img[..., 2])
        assert np.array_equal(out[..., 2], img[..., 0])

    def test_restoration_undoes_every_permutation(self):
        # With scores that follow the true layout, restoring a permuted image
        # reproduces the source exactly.
        rng = np.random.default_rng(3)
        img = rng.random((6, 5, 3)).astype(np.float32)
        rgb_scores = (3.0, 2.0, 1.0)
        for perm in ChannelPermutation.orderings():
            permuted = perm.apply(img)
            pred = predict_order(perm.permute_scores(rgb_scores))
            assert pred.permutation.name == perm.name
            assert np.array_equal(restore_rgb(permuted, pred), img)

    def test_idempotent_on_already_rgb(self):
        img = np.random.default_rng(4).random((4, 4, 3)).astype(np.float32)
        pred = predict_order((0.9, 0.5, 0.1))
        once = restore_rgb(img, pred)
        assert np.array_equal(restore_rgb(once, pred), once)


class TestDetectNearGray:
    def test_identical_scores(self):
        decision = detect_near_gray((0.3, 0.3, 0.3), tau=0.4)
        assert decision.is_near_gray
        assert decision.statistic == 0.0

    def test_polychromatic(self):
        decision = detect_near_gray((0.9, 0.5, 0.1), tau=0.4)
        assert not decision.is_near_gray
        assert decision.statistic == pytest.approx(0.8)

    def test_default_threshold(self):
        assert detect_near_gray((0.0, 0.0, 0.0)).threshold == 0.4

    def test_boundary_is_strict(self):
        assert not detect_near_gray((0.4, 0.0, 0.0), tau=0.4).is_near_gray

    @pytest.mark.parametrize("tau", [0.0, -0.1, math.nan])
    def test_rejects_non_positive_tau(self, tau):
        with pytest.raises(ValueError):
            detect_near_gray((0.1, 0.2, 0.3), tau=tau)

    def test_any_positive_tau_flags_identical_planes(self):
        for tau in (1e-12, 1e-3, 5.0):
            assert detect_near_gray((1.7, 1.7, 1.7), tau=tau).is_near_gray


class TestDetectBgr:
    def test_tie_labels_bgr(self):
        torch.manual_seed(0)
        model = zero_parameters(PairScorer(widths=(4, 6, 8)))
        img = np.random.default_rng(5).random((16, 16, 3)).astype(np.float32)
        decision = detect_bgr(img, model)
        assert decision.s12 == decision.s13 == 0.0
        assert decision.label == "BGR"

    def test_label_follows_pair_scores(self):
        torch.manual_seed(1)
        model = PairScorer(widths=(4, 6, 8))
        rng = np.random.default_rng(6)
        seen = set()
        for _ in range(20):
            img = rng.random((16, 16, 3)).astype(np.float32)
            decision = detect_bgr(img, model)
            expected = "RGB" if decision.s12 > decision.s13 else "BGR"
            assert decision.label == expected
            seen.add(decision.label)
        assert seen  # at least one decision rendered
