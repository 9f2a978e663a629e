"""Evaluation harness: per-permutation accuracy tables for the six-way
ordering task, RGB/BGR detection accuracy, near-grayscale precision/recall/F1
with the statistic distributions needed for the two-population histogram, and
the threshold sweep that picks tau on a validation split.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import (
    ShallowPairModel,
    SoftmaxOrderNet,
    channel_histogram,
    shallow_order_from_pairs,
    shallow_pair_classify,
    softmax_classify,
    softmax_entropy,
)
from .data import PermutedSample, Sample, expand_permutations, grayscale_augment
from .detectors import detect_bgr, predict_order
from .ranking import ChannelPermutation, ORDERINGS, PAIR_INDICES
from .scorer import ChannelScorer, PairScorer, score_image

#: Column order of the report table (six layouts then the overall column).
TABLE_COLUMNS = ("RGB", "RBG", "BGR", "BRG", "GBR", "GRB")

#: Entropy threshold for the softmax monochromatism indicator (just under ln 6).
SOFTMAX_ENTROPY_TAU = 1.79

Predictor = Callable[[PermutedSample], ChannelPermutation]
Statistic = Callable[[PermutedSample], float]


@dataclass(frozen=True)
class EvalReport:
    task: str
    method: str
    counts: dict[str, int]
    per_perm: dict[str, float] | None = None
    overall: float | None = None
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    tau: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        """Human-readable report; accuracies as percentages, two decimals."""
        lines = [f"task: {self.task}    method: {self.method}"]
        if self.per_perm is not None:
            header = "".join(f"{c:>9}" for c in TABLE_COLUMNS) + f"{'Overall':>9}"
            row = "".join(f"{100 * self.per_perm[c]:>9.2f}" for c in TABLE_COLUMNS)
            row += f"{100 * self.overall:>9.2f}"
            lines += [header, row]
        if self.accuracy is not None:
            lines.append(f"accuracy: {100 * self.accuracy:.2f}")
        if self.f1 is not None:
            lines.append(
                f"tau: {self.tau:.6f}    precision: {self.precision:.4f}    "
                f"recall: {self.recall:.4f}    F1: {self.f1:.4f}"
            )
        lines.append("counts: " + json.dumps(self.counts, sort_keys=True))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NearGrayResult:
    report: EvalReport
    gray_statistics: tuple[float, ...]
    color_statistics: tuple[float, ...]


# ---------------------------------------------------------------------------
# Predictors and statistics per model family
# ---------------------------------------------------------------------------


def orderer_predictor(scorer: ChannelScorer) -> Predictor:
    def predict(ps: PermutedSample) -> ChannelPermutation:
        return predict_order(score_image(ps.image, ps.masks, scorer)).permutation

    return predict


def softmax_predictor(model: SoftmaxOrderNet) -> Predictor:
    def predict(ps: PermutedSample) -> ChannelPermutation:
        probs = softmax_classify(ps.image, model)
        return ChannelPermutation(model.classes[int(np.argmax(probs))])

    return predict


def shallow_predictor(model: ShallowPairModel) -> Predictor:
    def predict(ps: PermutedSample) -> ChannelPermutation:
        hists = [channel_histogram(ps.image[:, :, c], model.bins) for c in range(3)]
        probs = [
            shallow_pair_classify(hists[i], hists[j], model) for i, j in PAIR_INDICES
        ]
        return shallow_order_from_pairs(*probs)

    return predict


def orderer_statistic(scorer: ChannelScorer) -> Statistic:
    """Largest absolute pairwise score gap (near-gray when small)."""

    def statistic(ps: PermutedSample) -> float:
        s = score_image(ps.image, ps.masks, scorer)
        return max(abs(s[i] - s[j]) for i, j in PAIR_INDICES)

    return statistic


def softmax_entropy_statistic(model: SoftmaxOrderNet) -> Statistic:
    """Prediction entropy of the six-way classifier (near-gray when large)."""

    def statistic(ps: PermutedSample) -> float:
        return softmax_entropy(softmax_classify(ps.image, model))

    return statistic


# ---------------------------------------------------------------------------
# Task evaluations
# ---------------------------------------------------------------------------


def evaluate_ordering(
    predictor: Predictor, samples: list[Sample], method: str = "orderer"
) -> EvalReport:
    """Six-way accuracy over the all-six expansion of a corpus.

    A prediction counts as correct only if the full layout matches; the report
    has one column per true layout plus the overall rate.
    """
    if not samples:
        raise ValueError("evaluation corpus is empty")
    correct = {name: 0 for name in ORDERINGS}
    totals = {name: 0 for name in ORDERINGS}
    for sample in samples:
        for ps in expand_permutations(sample, "all6"):
            totals[ps.true_perm.name] += 1
            if predictor(ps).name == ps.true_perm.name:
                correct[ps.true_perm.name] += 1
    per_perm = {name: correct[name] / totals[name] for name in ORDERINGS}
    overall = sum(correct.values()) / sum(totals.values())
    return EvalReport(
        task="order",
        method=method,
        counts={"samples": len(samples), "items": sum(totals.values())},
        per_perm=per_perm,
        overall=overall,
    )


def bgr_decider(scorer: PairScorer) -> Callable[[PermutedSample], str]:
    return lambda ps: detect_bgr(ps.image, scorer).label


def softmax_bgr_decider(model: SoftmaxOrderNet) -> Callable[[PermutedSample], str]:
    if model.n_classes != 2:
        raise ValueError("RGB/BGR decisions need the two-class softmax variant")

    def decide(ps: PermutedSample) -> str:
        probs = softmax_classify(ps.image, model)
        return model.classes[int(np.argmax(probs))]

    return decide


def evaluate_bgr(
    decider: Callable[[PermutedSample], str],
    samples: list[Sample],
    method: str = "bgr",
) -> EvalReport:
    """Accuracy on the balanced RGB/BGR expansion of a corpus."""
    if not samples:
        raise ValueError("evaluation corpus is empty")
    hits, total = 0, 0
    for sample in samples:
        for ps in expand_permutations(sample, "rgb_bgr"):
            total += 1
            if decider(ps) == ps.true_perm.name:
                hits += 1
    return EvalReport(
        task="bgr",
        method=method,
        counts={"samples": len(samples), "items": total},
        accuracy=hits / total,
    )


def build_neargray_items(
    samples: list[Sample], rng: np.random.Generator
) -> list[PermutedSample]:
    """A 50/50 labeled set: one gray-augmented and one permuted color variant
    per sample. The gray variants carry the GRAY marker as their label."""
    items: list[PermutedSample] = []
    for sample in samples:
        items.append(grayscale_augment(sample, rng))
        items.extend(expand_permutations(sample, "single_random", rng=rng))
    return items


def precision_recall_f1(
    decisions: Sequence[bool], labels: Sequence[bool]
) -> tuple[float, float, float]:
    """Precision/recall/F1 with the positive class given by ``labels``."""
    tp = sum(1 for d, l in zip(decisions, labels) if d and l)
    fp = sum(1 for d, l in zip(decisions, labels) if d and not l)
    fn = sum(1 for d, l in zip(decisions, labels) if not d and l)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate_neargray(
    statistic: Statistic,
    items: list[PermutedSample],
    tau: float,
    near_gray_if: str = "below",
    method: str = "orderer",
) -> NearGrayResult:
    """Near-gray detection metrics at a fixed threshold.

    ``near_gray_if`` is "below" for the score-gap statistic and "above" for
    the softmax entropy indicator. Near-gray is the positive class.
    """
    labels = [ps.true_perm.is_gray for ps in items]
    if all(labels) or not any(labels):
        raise ValueError("near-gray evaluation needs both classes present")
    stats = [statistic(ps) for ps in items]
    decisions = _threshold_decisions(stats, tau, near_gray_if)
    precision, recall, f1 = precision_recall_f1(decisions, labels)
    report = EvalReport(
        task="gray",
        method=method,
        counts={
            "near_gray": sum(labels),
            "polychromatic": len(labels) - sum(labels),
        },
        precision=precision,
        recall=recall,
        f1=f1,
        tau=tau,
    )
    return NearGrayResult(
        report=report,
        gray_statistics=tuple(s for s, l in zip(stats, labels) if l),
        color_statistics=tuple(s for s, l in zip(stats, labels) if not l),
    )


def _threshold_decisions(stats: Sequence[float], tau: float, near_gray_if: str) -> list[bool]:
    if near_gray_if == "below":
        return [s < tau for s in stats]
    if near_gray_if == "above":
        return [s > tau for s in stats]
    raise ValueError(f"near_gray_if must be 'below' or 'above', got {near_gray_if!r}")


def sweep_tau(
    stats: Sequence[float],
    labels: Sequence[bool],
    near_gray_if: str = "below",
) -> tuple[float, float]:
    """Best threshold by F1 over the observed statistic range.

    Candidates are the midpoints between consecutive distinct statistics plus
    the extremes; ties go to the smaller threshold. Perfectly separated
    populations therefore yield the midpoint of the separating gap. With all
    statistics equal, the single observed value is returned with a warning.
    """
    if len(stats) != len(labels) or not stats:
        raise ValueError("need matching, non-empty statistics and labels")
    unique = sorted(set(float(s) for s in stats))
    if len(unique) == 1:
        warnings.warn(
            "all statistics identical; threshold sweep is degenerate", RuntimeWarning
        )
        return unique[0], _f1_at(stats, labels, unique[0], near_gray_if)
    pad = unique[-1] - unique[0]
    candidates = [unique[0]]
    candidates += [(a + b) / 2 for a, b in zip(unique, unique[1:])]
    candidates.append(unique[-1] + pad * 1e-3)
    best_tau, best_f1 = candidates[0], -1.0
    for tau in candidates:
        f1 = _f1_at(stats, labels, tau, near_gray_if)
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau, best_f1


def _f1_at(stats, labels, tau, near_gray_if) -> float:
    return precision_recall_f1(_threshold_decisions(stats, tau, near_gray_if), labels)[2]


def plot_neargray_histogram(
    gray_stats: Sequence[float],
    color_stats: Sequence[float],
    tau: float,
    path: str | Path,
) -> None:
    """Two-population histogram of the detection statistic with the threshold line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.histogram_bin_edges(list(gray_stats) + list(color_stats), bins=40)
    ax.hist(gray_stats, bins=bins, alpha=0.6, label="near-gray")
    ax.hist(color_stats, bins=bins, alpha=0.6, label="polychromatic")
    ax.axvline(tau, color="k", linestyle="--", label=f"tau = {tau:.3f}")
    ax.set_xlabel("detection statistic")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
