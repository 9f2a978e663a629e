"""Pairwise ranking math for three-channel ordering.

The canonical color precedence is R before G before B. A scoring function
assigns one scalar per stored plane; the three pairwise score differences
drive a RankNet-style cross-entropy loss whose gradient sign pushes the
correctly-colored plane's score up and the other one down.

Everything here is scalar float64 math with no learned state, so it doubles
as the reference implementation that the torch training criterion and the
finite-difference oracle in the test suite are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

#: Colors in canonical precedence order (earlier = ranks first).
CHANNEL_COLORS = ("R", "G", "B")

#: Precedence rank per color; lower rank precedes higher rank.
COLOR_RANK = {"R": 0, "G": 1, "B": 2}

#: The six channel layouts, in the column order used by evaluation tables.
ORDERINGS = ("RGB", "RBG", "GRB", "GBR", "BRG", "BGR")

#: Degenerate marker for images whose three planes are (near-)identical.
GRAY = "GRAY"

#: Index pairs (i, j) over which the pairwise loss is summed.
PAIR_INDICES = ((0, 1), (0, 2), (1, 2))


def _tanh_grad(delta: float) -> float:
    t = math.tanh(delta)
    return 1.0 - t * t


#: Link functions applied to score differences: name -> (g, g').
LINKS = {
    "tanh": (math.tanh, _tanh_grad),
    "identity": (lambda d: d, lambda d: 1.0),
}


@dataclass(frozen=True)
class RankingConfig:
    """Temperature and link function of the pairwise probability model.

    ``link`` must name a monotonically increasing differentiable function
    with g(0) = 0; the identity link is kept only to reproduce its unstable
    optimization behaviour in ablations.
    """

    temperature: float = 0.1
    link: str = "tanh"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; choose from {sorted(LINKS)}")

    def link_value(self, delta: float) -> float:
        return LINKS[self.link][0](delta)

    def link_grad(self, delta: float) -> float:
        return LINKS[self.link][1](delta)


@dataclass(frozen=True)
class ChannelPermutation:
    """Assignment of the three stored planes to color labels.

    ``name`` is one of the six orderings ("RGB", ..., "BGR"), read as
    "plane k carries the color name[k]", or the degenerate marker "GRAY"
    for images whose planes are copies of one luminance plane.
    """

    name: str

    def __post_init__(self) -> None:
        if self.name not in ORDERINGS and self.name != GRAY:
            raise ValueError(f"invalid permutation name {self.name!r}")

    @classmethod
    def orderings(cls) -> tuple["ChannelPermutation", ...]:
        """The six non-degenerate permutations in table column order."""
        return tuple(cls(name) for name in ORDERINGS)

    @classmethod
    def identity(cls) -> "ChannelPermutation":
        return cls("RGB")

    @classmethod
    def gray(cls) -> "ChannelPermutation":
        return cls(GRAY)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "ChannelPermutation":
        return cls("".join(labels))

    @property
    def is_gray(self) -> bool:
        return self.name == GRAY

    @property
    def labels(self) -> tuple[str, str, str]:
        if self.is_gray:
            raise ValueError("GRAY marker has no per-plane color labels")
        return tuple(self.name)  # type: ignore[return-value]

    def source_indices(self) -> tuple[int, int, int]:
        """For each output plane, the RGB-ordered source plane index."""
        return tuple(COLOR_RANK[c] for c in self.labels)  # type: ignore[return-value]

    def apply(self, image: np.ndarray) -> np.ndarray:
        """Rearrange the channel-last planes of an RGB-ordered array into this layout."""
        if image.shape[-1] != 3:
            raise ValueError(f"expected channel-last 3-plane array, got shape {image.shape}")
        if self.is_gray:
            raise ValueError("GRAY is not an applicable permutation")
        return np.ascontiguousarray(image[..., list(self.source_indices())])

    def inverse(self) -> "ChannelPermutation":
        """The permutation whose apply() undoes this one's apply()."""
        out = [""] * 3
        for pos, color in enumerate(self.labels):
            out[COLOR_RANK[color]] = CHANNEL_COLORS[pos]
        return ChannelPermutation.from_labels(out)

    def compose(self, other: "ChannelPermutation") -> "ChannelPermutation":
        """Permutation r with r.apply(x) == self.apply(other.apply(x))."""
        return ChannelPermutation.from_labels(
            other.labels[COLOR_RANK[c]] for c in self.labels
        )

    def permute_scores(self, scores: Sequence[float]) -> tuple[float, float, float]:
        """Rearrange a score triple the same way apply() rearranges planes."""
        idx = self.source_indices()
        return (scores[idx[0]], scores[idx[1]], scores[idx[2]])


class ScoreTriple(NamedTuple):
    """Ranking scores of an image's three stored planes, in plane order."""

    s1: float
    s2: float
    s3: float


_TARGET_VALUES = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class PairTargets:
    """Desired pairwise precedence probabilities for plane pairs (1,2), (1,3), (2,3)."""

    y12: float
    y13: float
    y23: float

    def __post_init__(self) -> None:
        for name, y in zip(("y12", "y13", "y23"), self.as_tuple()):
            if y not in _TARGET_VALUES:
                raise ValueError(f"{name} must be 0, 1/2 or 1, got {y}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.y12, self.y13, self.y23)


def pair_targets(perm: ChannelPermutation) -> PairTargets:
    """Pairwise targets for a layout: y_ij = 1 iff plane i's color precedes plane j's.

    The GRAY marker yields 1/2 everywhere: identical planes must not be
    ranked against each other.
    """
    if perm.is_gray:
        return PairTargets(0.5, 0.5, 0.5)
    ranks = [COLOR_RANK[c] for c in perm.labels]
    ys = tuple(1.0 if ranks[i] < ranks[j] else 0.0 for i, j in PAIR_INDICES)
    return PairTargets(*ys)


def _check_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def _stable_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _softplus(x: float) -> float:
    # log(1 + exp(x)) as max(x, 0) + log1p(exp(-|x|)): no overflow for large
    # |x| (the identity link can produce arbitrarily large exponents).
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def pair_probability(delta: float, cfg: RankingConfig = RankingConfig()) -> float:
    """Probability that the first plane of a pair precedes the second.

    Computes sigmoid(g(delta) / T) for the score difference delta; strictly
    increasing in delta and exactly 1/2 at delta = 0 since g(0) = 0.
    """
    delta = _check_finite(delta, "delta")
    return _stable_sigmoid(cfg.link_value(delta) / cfg.temperature)


def pair_ranking_loss(delta: float, y: float, cfg: RankingConfig = RankingConfig()) -> float:
    """Cross-entropy of one pair in the g-and-T parameterization.

    Equals (1 - y) * x + log(1 + exp(-x)) with x = g(delta) / T, which is the
    per-pair term that ranking_loss sums over the three pairs. Evaluated as
    (1 - y) * softplus(x) + y * softplus(-x) — the same quantity, but a sum of
    nonnegative terms, so no cancellation when |x| is large.
    """
    delta = _check_finite(delta, "delta")
    if y not in _TARGET_VALUES:
        raise ValueError(f"target must be 0, 1/2 or 1, got {y}")
    x = cfg.link_value(delta) / cfg.temperature
    return (1.0 - y) * _softplus(x) + y * _softplus(-x)


def ranking_loss(
    scores: Sequence[float],
    targets: PairTargets,
    cfg: RankingConfig = RankingConfig(),
) -> float:
    """Summed pairwise cross-entropy over the pairs (1,2), (1,3), (2,3)."""
    if len(scores) != 3:
        raise ValueError(f"expected 3 scores, got {len(scores)}")
    s = [_check_finite(v, f"scores[{i}]") for i, v in enumerate(scores)]
    ys = targets.as_tuple()
    return sum(
        pair_ranking_loss(s[i] - s[j], y, cfg) for (i, j), y in zip(PAIR_INDICES, ys)
    )


def loss_grad_delta(delta: float, y: float, cfg: RankingConfig = RankingConfig()) -> float:
    """Derivative of the per-pair loss with respect to the score difference.

    (g'(delta) / T) * ((1 - y) - sigmoid(-g(delta)/T)): negative when y = 1,
    positive when y = 0, and zero at delta = 0 when y = 1/2.
    """
    delta = _check_finite(delta, "delta")
    if y not in _TARGET_VALUES:
        raise ValueError(f"target must be 0, 1/2 or 1, got {y}")
    x = cfg.link_value(delta) / cfg.temperature
    return (cfg.link_grad(delta) / cfg.temperature) * ((1.0 - y) - _stable_sigmoid(-x))
