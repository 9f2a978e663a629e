"""sklearn-style estimators over the training loops and checkpoint container.

Each estimator stores its hyperparameters verbatim in __init__ (so get_params/
set_params/clone work), learns state into trailing-underscore attributes in
fit(), and round-trips through the shared checkpoint format via save()/load().
Inputs are corpus Samples (or PermutedSamples); anything with an ``image``
and, for the mask-pooling model, a ``masks`` attribute works.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import (
    ShallowPairModel,
    SoftmaxOrderNet,
    channel_histogram,
    shallow_order_from_pairs,
    shallow_pair_classify,
    softmax_classify,
    softmax_entropy,
)
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_state_arrays,
    save_checkpoint,
    state_dict_arrays,
)
from .data import MaskStack, Sample
from .detectors import (
    GrayDecision,
    OrderPrediction,
    detect_bgr,
    detect_near_gray,
    predict_order,
    restore_rgb,
)
from .ranking import PAIR_INDICES, RankingConfig
from .scorer import DESK_WIDTHS, PAIR_WIDTHS, ChannelScorer, PairScorer, score_image
from .training import (
    TrainConfig,
    train_bgr,
    train_orderer,
    train_shallow,
    train_softmax,
)


def _require_fitted(estimator, attr: str = "model_") -> None:
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() or load()"
        )


class _TrainParamsMixin:
    """Shared TrainConfig assembly for estimators exposing the loop knobs."""

    def _train_config(self, gray_fraction: float = 0.0) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            seed=self.seed,
            ranking=RankingConfig(temperature=self.temperature, link=self.link),
            gray_fraction=gray_fraction,
        )

    def _train_echo(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "temperature": self.temperature,
            "link": self.link,
        }


class ChannelOrderer(_TrainParamsMixin, BaseEstimator):
    """Channel-order predictor: U-Net per-plane scores pooled over semantic masks.

    fit() trains on a corpus of RGB-ordered samples (the all-six permutation
    expansion happens inside); predict() returns the layout name of each
    input; correct() rearranges planes back to RGB.
    """

    def __init__(
        self,
        widths: tuple[int, int, int, int] = DESK_WIDTHS,
        temperature: float = 0.1,
        link: str = "tanh",
        epochs: int = 20,
        batch_size: int = 16,
        learning_rate: float = 1e-3,
        lr_decay: float = 0.98,
        gray_fraction: float = 0.0,
        tau: float = 0.4,
        seed: int = 0,
    ):
        self.widths = widths
        self.temperature = temperature
        self.link = link
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.gray_fraction = gray_fraction
        self.tau = tau
        self.seed = seed

    def fit(self, X: list[Sample], y=None) -> "ChannelOrderer":
        config = self._train_config(gray_fraction=self.gray_fraction)
        self.model_, self.history_ = train_orderer(X, config, widths=tuple(self.widths))
        self.class_vocab_ = self.model_.class_vocab
        return self

    def score_image(self, image: np.ndarray, masks: MaskStack) -> tuple[float, float, float]:
        _require_fitted(self)
        return score_image(image, masks, self.model_)

    def predict_one(self, item) -> OrderPrediction:
        return predict_order(self.score_image(item.image, item.masks))

    def predict(self, X: Iterable) -> list[str]:
        """Predicted layout name per item (e.g. "BGR" for a blue-first image)."""
        return [self.predict_one(item).permutation.name for item in X]

    def decision_scores(self, X: Iterable) -> np.ndarray:
        """Raw (n, 3) per-plane ranking scores."""
        return np.asarray([self.score_image(item.image, item.masks) for item in X])

    def correct(self, item) -> np.ndarray:
        """The item's image rearranged so its planes read R, G, B."""
        pred = self.predict_one(item)
        return restore_rgb(item.image, pred)

    def gray_decision(self, item, tau: float | None = None) -> GrayDecision:
        scores = self.score_image(item.image, item.masks)
        return detect_near_gray(scores, self.tau if tau is None else tau)

    def save(self, path: str | Path) -> None:
        _require_fitted(self)
        meta = {
            "class_vocab": list(self.class_vocab_),
            "widths": list(self.model_.widths),
            "tau": self.tau,
            "gray_fraction": self.gray_fraction,
            "seed": self.seed,
            "train": self._train_echo(),
        }
        save_checkpoint(path, "orderer", state_dict_arrays(self.model_), meta)

    @classmethod
    def load(cls, path: str | Path) -> "ChannelOrderer":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "orderer":
            raise CheckpointError(f"{path}: expected an orderer checkpoint, got {ckpt.kind!r}")
        meta = ckpt.meta
        est = cls(
            widths=tuple(meta["widths"]),
            tau=meta["tau"],
            gray_fraction=meta["gray_fraction"],
            seed=meta["seed"],
            **{k: meta["train"][k] for k in ("temperature", "link", "epochs",
                                             "batch_size", "learning_rate", "lr_decay")},
        )
        est.class_vocab_ = tuple(meta["class_vocab"])
        est.model_ = ChannelScorer(est.class_vocab_, widths=tuple(meta["widths"]))
        load_state_arrays(est.model_, ckpt.arrays)
        est.model_.eval()
        return est


class RgbBgrDetector(_TrainParamsMixin, BaseEstimator):
    """Two-way RGB-vs-BGR detector over pair scores of (plane1, plane2/3) stacks."""

    def __init__(
        self,
        widths: tuple[int, int, int] = PAIR_WIDTHS,
        temperature: float = 0.1,
        link: str = "tanh",
        epochs: int = 20,
        batch_size: int = 16,
        learning_rate: float = 1e-3,
        lr_decay: float = 0.98,
        seed: int = 0,
    ):
        self.widths = widths
        self.temperature = temperature
        self.link = link
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.seed = seed

    def fit(self, X: list[Sample], y=None) -> "RgbBgrDetector":
        self.model_, self.history_ = train_bgr(X, self._train_config(), widths=tuple(self.widths))
        return self

    def predict_one(self, item):
        _require_fitted(self)
        return detect_bgr(item.image, self.model_)

    def predict(self, X: Iterable) -> list[str]:
        return [self.predict_one(item).label for item in X]

    def save(self, path: str | Path) -> None:
        _require_fitted(self)
        meta = {"widths": list(self.model_.widths), "seed": self.seed, "train": self._train_echo()}
        save_checkpoint(path, "bgr", state_dict_arrays(self.model_), meta)

    @classmethod
    def load(cls, path: str | Path) -> "RgbBgrDetector":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "bgr":
            raise CheckpointError(f"{path}: expected a bgr checkpoint, got {ckpt.kind!r}")
        meta = ckpt.meta
        est = cls(
            widths=tuple(meta["widths"]),
            seed=meta["seed"],
            **{k: meta["train"][k] for k in ("temperature", "link", "epochs",
                                             "batch_size", "learning_rate", "lr_decay")},
        )
        est.model_ = PairScorer(widths=tuple(meta["widths"]))
        load_state_arrays(est.model_, ckpt.arrays)
        est.model_.eval()
        return est


class SoftmaxOrderClassifier(_TrainParamsMixin, BaseEstimator):
    """Baseline: plain conv classifier over layouts (six-way or RGB/BGR)."""

    def __init__(
        self,
        classes: int = 6,
        widths: tuple[int, int, int, int] = DESK_WIDTHS,
        temperature: float = 0.1,
        link: str = "tanh",
        epochs: int = 20,
        batch_size: int = 16,
        learning_rate: float = 1e-3,
        lr_decay: float = 0.98,
        seed: int = 0,
    ):
        self.classes = classes
        self.widths = widths
        self.temperature = temperature
        self.link = link
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.seed = seed

    def fit(self, X: list[Sample], y=None) -> "SoftmaxOrderClassifier":
        self.model_, self.history_ = train_softmax(
            X, self._train_config(), classes=self.classes, widths=tuple(self.widths)
        )
        return self

    def predict_proba(self, X: Iterable) -> np.ndarray:
        _require_fitted(self)
        return np.asarray([softmax_classify(item.image, self.model_) for item in X])

    def predict(self, X: Iterable) -> list[str]:
        _require_fitted(self)
        probs = self.predict_proba(X)
        return [self.model_.classes[int(i)] for i in np.argmax(probs, axis=1)]

    def entropy(self, X: Iterable) -> np.ndarray:
        """Per-item prediction entropy, the baseline's monochromatism indicator."""
        return np.asarray([softmax_entropy(p) for p in self.predict_proba(X)])

    def save(self, path: str | Path) -> None:
        _require_fitted(self)
        kind = "softmax6" if self.model_.n_classes == 6 else "softmax2"
        meta = {"widths": list(self.model_.widths), "seed": self.seed, "train": self._train_echo()}
        save_checkpoint(path, kind, state_dict_arrays(self.model_), meta)

    @classmethod
    def load(cls, path: str | Path) -> "SoftmaxOrderClassifier":
        ckpt = load_checkpoint(path)
        if ckpt.kind not in ("softmax6", "softmax2"):
            raise CheckpointError(f"{path}: expected a softmax checkpoint, got {ckpt.kind!r}")
        n_classes = 6 if ckpt.kind == "softmax6" else 2
        meta = ckpt.meta
        est = cls(
            classes=n_classes,
            widths=tuple(meta["widths"]),
            seed=meta["seed"],
            **{k: meta["train"][k] for k in ("temperature", "link", "epochs",
                                             "batch_size", "learning_rate", "lr_decay")},
        )
        est.model_ = SoftmaxOrderNet(n_classes=n_classes, widths=tuple(meta["widths"]))
        load_state_arrays(est.model_, ckpt.arrays)
        est.model_.eval()
        return est


class ShallowHistogramOrderer(_TrainParamsMixin, BaseEstimator):
    """Baseline: pairwise front-rank classifier over per-channel color histograms."""

    def __init__(
        self,
        bins: int = 256,
        temperature: float = 0.1,
        link: str = "tanh",
        epochs: int = 20,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        lr_decay: float = 0.98,
        seed: int = 0,
    ):
        self.bins = bins
        self.temperature = temperature
        self.link = link
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.seed = seed

    def fit(self, X: list[Sample], y=None) -> "ShallowHistogramOrderer":
        self.model_, self.history_ = train_shallow(X, self._train_config(), bins=self.bins)
        return self

    def pair_probability(self, hist_i: np.ndarray, hist_j: np.ndarray) -> float:
        _require_fitted(self)
        return shallow_pair_classify(hist_i, hist_j, self.model_)

    def predict_one(self, item) -> str:
        _require_fitted(self)
        hists = [channel_histogram(item.image[:, :, c], self.bins) for c in range(3)]
        probs = [self.pair_probability(hists[i], hists[j]) for i, j in PAIR_INDICES]
        return shallow_order_from_pairs(*probs).name

    def predict(self, X: Iterable) -> list[str]:
        return [self.predict_one(item) for item in X]

    def save(self, path: str | Path) -> None:
        _require_fitted(self)
        meta = {"bins": self.bins, "seed": self.seed, "train": self._train_echo()}
        save_checkpoint(path, "shallow", state_dict_arrays(self.model_), meta)

    @classmethod
    def load(cls, path: str | Path) -> "ShallowHistogramOrderer":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "shallow":
            raise CheckpointError(f"{path}: expected a shallow checkpoint, got {ckpt.kind!r}")
        meta = ckpt.meta
        est = cls(
            bins=meta["bins"],
            seed=meta["seed"],
            **{k: meta["train"][k] for k in ("temperature", "link", "epochs",
                                             "batch_size", "learning_rate", "lr_decay")},
        )
        est.model_ = ShallowPairModel(bins=meta["bins"])
        load_state_arrays(est.model_, ckpt.arrays)
        est.model_.eval()
        return est


def load_estimator(path: str | Path):
    """Open any checkpoint and return the matching fitted estimator."""
    kind = load_checkpoint(path).kind
    loaders = {
        "orderer": ChannelOrderer.load,
        "bgr": RgbBgrDetector.load,
        "softmax6": SoftmaxOrderClassifier.load,
        "softmax2": SoftmaxOrderClassifier.load,
        "shallow": ShallowHistogramOrderer.load,
    }
    return loaders[kind](path)
