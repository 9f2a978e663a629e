"""The two competing baselines: a shallow pairwise classifier over per-channel
color histograms, and a softmax classifier over the stacked image (six-way, or
two-way for the RGB/BGR task) whose output entropy doubles as a monochromatism
indicator.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .detectors import predict_order
from .ranking import ChannelPermutation, ORDERINGS
from .scorer import DESK_WIDTHS, _ConvStage

#: Default histogram resolution over [0, 1].
DEFAULT_BINS = 256

#: Hidden width of the shallow pairwise classifier.
SHALLOW_HIDDEN = 64


def channel_histogram(channel: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Normalized equal-width histogram of one plane over [0, 1].

    The last bin is right-inclusive, so a constant-1 plane lands entirely in
    bin ``bins - 1``.
    """
    if channel.size == 0:
        raise ValueError("cannot histogram an empty plane")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    lo, hi = float(channel.min()), float(channel.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"values outside [0, 1]: min={lo}, max={hi}")
    counts, _ = np.histogram(channel, bins=bins, range=(0.0, 1.0))
    return counts.astype(np.float64) / channel.size


class ShallowPairModel(nn.Module):
    """Two-layer MLP over two concatenated channel histograms -> one logit."""

    def __init__(self, bins: int = DEFAULT_BINS, hidden: int = SHALLOW_HIDDEN):
        super().__init__()
        self.bins = bins
        self.net = nn.Sequential(
            nn.Linear(2 * bins, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 1),
        )

    def forward(self, pairs: torch.Tensor) -> torch.Tensor:
        """(B, 2 * bins) histogram pairs -> (B,) logits."""
        return self.net(pairs).squeeze(-1)


def shallow_pair_classify(
    hist_i: np.ndarray, hist_j: np.ndarray, model: ShallowPairModel
) -> float:
    """Probability that channel i ranks in front of channel j."""
    if hist_i.shape != hist_j.shape:
        raise ValueError(f"histogram shapes differ: {hist_i.shape} vs {hist_j.shape}")
    if hist_i.shape != (model.bins,):
        raise ValueError(f"expected {model.bins}-bin histograms, got {hist_i.shape}")
    x = torch.from_numpy(
        np.concatenate([hist_i, hist_j]).astype(np.float32)
    )
    with torch.no_grad():
        logit = model(x[None])
    return float(torch.sigmoid(logit)[0])


def shallow_order_from_pairs(p12: float, p13: float, p23: float) -> ChannelPermutation:
    """Assemble a layout from the three pairwise front-rank probabilities.

    Each plane's tally is the sum of its probabilities of preceding the other
    two (a Borda count); the tally triple is then ranked like channel scores,
    so majority-consistent pair decisions always win and cyclic ones resolve
    deterministically.
    """
    tallies = (p12 + p13, (1.0 - p12) + p23, (1.0 - p13) + (1.0 - p23))
    return predict_order(tallies).permutation


class SoftmaxOrderNet(nn.Module):
    """Conv classifier over the stacked 3-plane image with a linear class head.

    The encoder mirrors the channel scorer's encoder widths so the comparison
    is about inductive bias, not capacity.
    """

    def __init__(
        self,
        n_classes: int = 6,
        widths: tuple[int, int, int, int] = DESK_WIDTHS,
    ):
        super().__init__()
        if n_classes not in (2, 6):
            raise ValueError(f"n_classes must be 2 or 6, got {n_classes}")
        w1, w2, w3, w4 = widths
        self.n_classes = n_classes
        self.widths = tuple(widths)
        self.encoder = nn.Sequential(
            _ConvStage(3, w1),
            nn.MaxPool2d(2),
            _ConvStage(w1, w2),
            nn.MaxPool2d(2),
            _ConvStage(w2, w3),
            nn.MaxPool2d(2),
            _ConvStage(w3, w4),
        )
        self.head = nn.Linear(w4, n_classes)

    @property
    def classes(self) -> tuple[str, ...]:
        return ORDERINGS if self.n_classes == 6 else ("RGB", "BGR")

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) stacked images -> (B, n_classes) logits."""
        x = self.encoder(images)
        return self.head(x.mean(dim=(-2, -1)))


def softmax_classify(image: np.ndarray, model: SoftmaxOrderNet) -> np.ndarray:
    """Class distribution over layouts for one channel-last image."""
    x = torch.from_numpy(
        np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32)
    )
    with torch.no_grad():
        probs = torch.softmax(model(x[None]), dim=-1)
    return probs[0].numpy().astype(np.float64)


def softmax_entropy(p: np.ndarray) -> float:
    """Shannon entropy -sum p ln p with 0 ln 0 = 0; in [0, ln(len(p))]."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"expected a probability vector, got shape {p.shape}")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("entries must be nonnegative and sum to 1")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
