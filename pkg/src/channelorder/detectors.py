"""Inference-time decision rules on top of channel scores: full six-way
layout prediction and restoration, RGB-vs-BGR pair detection, and the
near-grayscale rule based on the largest absolute score gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MaskStack
from .ranking import CHANNEL_COLORS, ChannelPermutation, PAIR_INDICES
from .scorer import ChannelScorer, PairScorer, score_image, score_pair


@dataclass(frozen=True)
class OrderPrediction:
    """Predicted layout of an image's stored planes."""

    permutation: ChannelPermutation
    scores: tuple[float, float, float]
    max_abs_delta: float
    tie_flag: bool


@dataclass(frozen=True)
class GrayDecision:
    is_near_gray: bool
    statistic: float
    threshold: float


@dataclass(frozen=True)
class BgrDecision:
    label: str  # "RGB" or "BGR"
    s12: float
    s13: float


def predict_order(scores: tuple[float, float, float]) -> OrderPrediction:
    """Label the highest-scoring plane R, the lowest B, the remaining one G.

    Exact ties are broken deterministically: the lower plane index takes the
    earlier color, and the tie is flagged so callers can route the image to
    the near-gray detector instead.
    """
    s = tuple(float(v) for v in scores)
    if len(s) != 3 or not all(math.isfinite(v) for v in s):
        raise ValueError(f"expected three finite scores, got {scores}")
    order = sorted(range(3), key=lambda i: (-s[i], i))
    labels = [""] * 3
    for color, pos in zip(CHANNEL_COLORS, order):
        labels[pos] = color
    deltas = [abs(s[i] - s[j]) for i, j in PAIR_INDICES]
    return OrderPrediction(
        permutation=ChannelPermutation.from_labels(labels),
        scores=s,
        max_abs_delta=max(deltas),
        tie_flag=any(s[i] == s[j] for i, j in PAIR_INDICES),
    )


def restore_rgb(image: np.ndarray, pred: OrderPrediction) -> np.ndarray:
    """Rearrange planes so the predicted labels read (R, G, B)."""
    return pred.permutation.inverse().apply(image)


def detect_near_gray(
    scores: tuple[float, float, float], tau: float = 0.4
) -> GrayDecision:
    """Near-grayscale iff the largest absolute pairwise score gap is below tau."""
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be positive, got {tau}")
    s = tuple(float(v) for v in scores)
    statistic = max(abs(s[i] - s[j]) for i, j in PAIR_INDICES)
    return GrayDecision(is_near_gray=statistic < tau, statistic=statistic, threshold=tau)


def detect_bgr(image: np.ndarray, scorer: PairScorer) -> BgrDecision:
    """Score the (plane1, plane2) and (plane1, plane3) stacks; RGB iff s12 > s13.

    An exact tie is labelled BGR, with both scores reported.
    """
    s12 = score_pair(np.stack([image[:, :, 0], image[:, :, 1]], axis=-1), scorer)
    s13 = score_pair(np.stack([image[:, :, 0], image[:, :, 2]], axis=-1), scorer)
    return BgrDecision(label="RGB" if s12 > s13 else "BGR", s12=s12, s13=s13)


def predict_image_order(
    image: np.ndarray, masks: MaskStack, scorer: ChannelScorer
) -> OrderPrediction:
    """Convenience: score an image's planes and predict its layout."""
    return predict_order(score_image(image, masks, scorer))
