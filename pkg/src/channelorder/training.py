"""Training loops for the channel scorer, the RGB/BGR pair detector, and the
two baselines: Adam throughout, learning rate decayed by a fixed factor once
per epoch, seed-deterministic shuffling, and a NaN guard that aborts with the
offending epoch/batch.

Full-scale defaults are batch 48 / 100 epochs / lr 1e-3 decayed by 0.98;
``TrainConfig.desk()`` is the CPU-scale preset (batch 16, 20 epochs) used by
the synthetic-corpus experiments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .baselines import ShallowPairModel, SoftmaxOrderNet, channel_histogram
from .data import PermutedSample, Sample, expand_permutations, grayscale_augment
from .ranking import ORDERINGS, PAIR_INDICES, RankingConfig
from .scorer import DESK_WIDTHS, PAIR_WIDTHS, ChannelScorer, PairScorer

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 48
    epochs: int = 100
    learning_rate: float = 1e-3
    lr_decay: float = 0.98
    seed: int = 0
    ranking: RankingConfig = field(default_factory=RankingConfig)
    gray_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.gray_fraction <= 1:
            raise ValueError(f"gray_fraction must be in [0, 1], got {self.gray_fraction}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """CPU-scale preset; keyword overrides win."""
        cfg = cls(batch_size=16, epochs=20)
        return replace(cfg, **overrides) if overrides else cfg

    def learning_rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay**epoch


def pairwise_ranking_logits(deltas: torch.Tensor, cfg: RankingConfig) -> torch.Tensor:
    if cfg.link == "tanh":
        return torch.tanh(deltas) / cfg.temperature
    return deltas / cfg.temperature


def ranking_loss_torch(
    scores: torch.Tensor, targets: torch.Tensor, cfg: RankingConfig
) -> torch.Tensor:
    """Per-image summed pairwise loss: (B, 3) scores x (B, 3) targets -> (B,).

    Same math as ranking.ranking_loss, in tensor form for training.
    """
    deltas = torch.stack(
        [scores[:, i] - scores[:, j] for i, j in PAIR_INDICES], dim=1
    )
    x = pairwise_ranking_logits(deltas, cfg)
    per_pair = (1.0 - targets) * F.softplus(x) + targets * F.softplus(-x)
    return per_pair.sum(dim=1)


def pair_loss_torch(
    deltas: torch.Tensor, targets: torch.Tensor, cfg: RankingConfig
) -> torch.Tensor:
    """Single-pair loss for the RGB/BGR detector: (B,) deltas -> (B,)."""
    x = pairwise_ranking_logits(deltas, cfg)
    return (1.0 - targets) * F.softplus(x) + targets * F.softplus(-x)


def _shared_vocab(samples: list[Sample]) -> tuple[str, ...]:
    if not samples:
        raise ValueError("training corpus is empty")
    vocab = samples[0].masks.class_vocab
    for sample in samples:
        if sample.masks.class_vocab != vocab:
            raise ValueError(f"sample {sample.id} disagrees on class vocabulary")
    return vocab


def _check_finite(loss: torch.Tensor, epoch: int, batch: int) -> None:
    if not torch.isfinite(loss):
        raise TrainingDiverged(
            f"training loss became non-finite at epoch {epoch}, batch {batch}"
        )


def build_ranking_items(
    samples: list[Sample], config: TrainConfig
) -> list[PermutedSample]:
    """All-six permutation expansion, plus a gray-augmented fraction if configured."""
    items: list[PermutedSample] = []
    for sample in samples:
        items.extend(expand_permutations(sample, "all6"))
    if config.gray_fraction > 0:
        rng = np.random.default_rng(config.seed)
        n_gray = int(round(config.gray_fraction * len(samples)))
        for idx in rng.choice(len(samples), size=n_gray, replace=len(samples) < n_gray):
            items.append(grayscale_augment(samples[int(idx)], rng))
    return items


def _ranking_batch(
    items: list[PermutedSample], idx: np.ndarray
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    planes = np.stack([items[i].image.transpose(2, 0, 1) for i in idx])
    masks = np.stack([items[i].masks.masks for i in idx]).astype(np.float32)
    targets = np.stack([items[i].targets.as_tuple() for i in idx]).astype(np.float32)
    return (
        torch.from_numpy(np.ascontiguousarray(planes, dtype=np.float32)),
        torch.from_numpy(masks),
        torch.from_numpy(targets),
    )


def _run_epochs(model, items, config, batch_fn, loss_fn) -> list[float]:
    """Common loop: history[0] is the pre-training mean loss over all items."""
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed)
    n = len(items)
    order = np.arange(n)

    def dataset_loss() -> float:
        model.eval()
        total = 0.0
        with torch.no_grad():
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                total += float(loss_fn(model, batch_fn(items, idx)).sum())
        return total / n

    history = [dataset_loss()]
    logger.info("epoch %3d  loss %.6f (initial)", 0, history[0])
    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        perm = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            per_item = loss_fn(model, batch_fn(items, idx))
            loss = per_item.mean()
            _check_finite(loss, epoch + 1, b)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(per_item.detach().sum())
            seen += len(idx)
        history.append(total / seen)
        logger.info("epoch %3d  lr %.6g  loss %.6f", epoch + 1, lr, history[-1])
    model.eval()
    return history


def train_orderer(
    samples: list[Sample],
    config: TrainConfig,
    widths: tuple[int, int, int, int] = DESK_WIDTHS,
) -> tuple[ChannelScorer, list[float]]:
    """Fit the channel scorer on the all-six expansion of a corpus.

    Returns the model and the loss history (entry 0 is the pre-training loss).
    Bit-reproducible for a fixed seed and thread count.
    """
    vocab = _shared_vocab(samples)
    torch.manual_seed(config.seed)
    model = ChannelScorer(vocab, widths=widths)
    items = build_ranking_items(samples, config)

    def loss_fn(m, batch):
        planes, masks, targets = batch
        return ranking_loss_torch(m(planes, masks), targets, config.ranking)

    history = _run_epochs(model, items, config, _ranking_batch, loss_fn)
    return model, history


def _bgr_items(samples: list[Sample]) -> list[tuple[PermutedSample, float]]:
    items = []
    for sample in samples:
        for ps in expand_permutations(sample, "rgb_bgr"):
            items.append((ps, 1.0 if ps.true_perm.name == "RGB" else 0.0))
    return items


def _bgr_batch(items, idx) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    imgs = [items[i][0].image for i in idx]
    p12 = np.stack([img[:, :, (0, 1)].transpose(2, 0, 1) for img in imgs])
    p13 = np.stack([img[:, :, (0, 2)].transpose(2, 0, 1) for img in imgs])
    ys = np.asarray([items[i][1] for i in idx], dtype=np.float32)
    to = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
    return to(p12), to(p13), torch.from_numpy(ys)


def train_bgr(
    samples: list[Sample],
    config: TrainConfig,
    widths: tuple[int, int, int] = PAIR_WIDTHS,
) -> tuple[PairScorer, list[float]]:
    """Fit the pair scorer on balanced RGB/BGR variants of a corpus."""
    _shared_vocab(samples)
    torch.manual_seed(config.seed)
    model = PairScorer(widths=widths)
    items = _bgr_items(samples)

    def loss_fn(m, batch):
        p12, p13, ys = batch
        deltas = m(p12) - m(p13)
        return pair_loss_torch(deltas, ys, config.ranking)

    history = _run_epochs(model, items, config, _bgr_batch, loss_fn)
    return model, history


def _softmax_items(samples: list[Sample], classes: int) -> list[tuple[PermutedSample, int]]:
    mode = "all6" if classes == 6 else "rgb_bgr"
    label_of = {name: i for i, name in enumerate(ORDERINGS if classes == 6 else ("RGB", "BGR"))}
    items = []
    for sample in samples:
        for ps in expand_permutations(sample, mode):
            items.append((ps, label_of[ps.true_perm.name]))
    return items


def _softmax_batch(items, idx) -> tuple[torch.Tensor, torch.Tensor]:
    imgs = np.stack([items[i][0].image.transpose(2, 0, 1) for i in idx])
    labels = np.asarray([items[i][1] for i in idx], dtype=np.int64)
    return (
        torch.from_numpy(np.ascontiguousarray(imgs, dtype=np.float32)),
        torch.from_numpy(labels),
    )


def train_softmax(
    samples: list[Sample],
    config: TrainConfig,
    classes: int = 6,
    widths: tuple[int, int, int, int] = DESK_WIDTHS,
) -> tuple[SoftmaxOrderNet, list[float]]:
    """Fit the softmax baseline (six-way layouts, or two-way RGB/BGR)."""
    _shared_vocab(samples)
    torch.manual_seed(config.seed)
    model = SoftmaxOrderNet(n_classes=classes, widths=widths)
    items = _softmax_items(samples, classes)

    def loss_fn(m, batch):
        imgs, labels = batch
        return F.cross_entropy(m(imgs), labels, reduction="none")

    history = _run_epochs(model, items, config, _softmax_batch, loss_fn)
    return model, history


def train_shallow(
    samples: list[Sample],
    config: TrainConfig,
    bins: int = 256,
) -> tuple[ShallowPairModel, list[float]]:
    """Fit the histogram baseline with binary cross-entropy over channel pairs.

    Pixels are touched exactly once, to histogram each sample's three RGB
    planes; every training item is assembled from those histograms.
    """
    if not samples:
        raise ValueError("training corpus is empty")
    torch.manual_seed(config.seed)
    model = ShallowPairModel(bins=bins)

    hists = {
        sample.id: [channel_histogram(sample.image[:, :, c], bins) for c in range(3)]
        for sample in samples
    }
    items: list[tuple[np.ndarray, float]] = []
    for sample in samples:
        for ps in expand_permutations(sample, "all6"):
            src = ps.true_perm.source_indices()
            for (i, j), y in zip(PAIR_INDICES, ps.targets.as_tuple()):
                pair = np.concatenate([hists[sample.id][src[i]], hists[sample.id][src[j]]])
                items.append((pair.astype(np.float32), y))

    def batch_fn(items, idx):
        xs = torch.from_numpy(np.stack([items[i][0] for i in idx]))
        ys = torch.from_numpy(np.asarray([items[i][1] for i in idx], dtype=np.float32))
        return xs, ys

    def loss_fn(m, batch):
        xs, ys = batch
        return F.binary_cross_entropy_with_logits(m(xs), ys, reduction="none")

    history = _run_epochs(model, items, config, batch_fn, loss_fn)
    return model, history
