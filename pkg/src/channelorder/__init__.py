"""Channel-order prediction for 3-channel images.

A learned per-channel scorer ranks an image's stored planes against the
canonical R-before-G-before-B order, which is enough to name the layout
(RGB, BGR, ...), rearrange mis-permuted images back to RGB, and flag
near-grayscale inputs whose planes all score alike.
"""

from .baselines import channel_histogram, softmax_entropy
from .data import (
    CorpusError,
    MaskStack,
    PermutedSample,
    Sample,
    SynthSpec,
    expand_permutations,
    generate_synthetic,
    grayscale_augment,
    load_corpus,
    permute_channels,
    save_corpus,
    split_corpus,
)
from .detectors import (
    BgrDecision,
    GrayDecision,
    OrderPrediction,
    detect_bgr,
    detect_near_gray,
    predict_order,
    restore_rgb,
)
from .estimators import (
    ChannelOrderer,
    RgbBgrDetector,
    ShallowHistogramOrderer,
    SoftmaxOrderClassifier,
    load_estimator,
)
from .evaluation import (
    EvalReport,
    evaluate_bgr,
    evaluate_neargray,
    evaluate_ordering,
    sweep_tau,
)
from .ranking import (
    ChannelPermutation,
    PairTargets,
    RankingConfig,
    ScoreTriple,
    loss_grad_delta,
    pair_probability,
    pair_targets,
    ranking_loss,
)
from .scorer import (
    ChannelScorer,
    PairScorer,
    feature_map,
    masked_mean_pool,
    score_channel,
    score_image,
    score_pair,
)
from .training import TrainConfig, TrainingDiverged, train_bgr, train_orderer

__version__ = "0.1.0"

__all__ = [
    "BgrDecision",
    "ChannelOrderer",
    "ChannelPermutation",
    "ChannelScorer",
    "CorpusError",
    "EvalReport",
    "GrayDecision",
    "MaskStack",
    "OrderPrediction",
    "PairScorer",
    "PairTargets",
    "PermutedSample",
    "RankingConfig",
    "RgbBgrDetector",
    "Sample",
    "ScoreTriple",
    "ShallowHistogramOrderer",
    "SoftmaxOrderClassifier",
    "SynthSpec",
    "TrainConfig",
    "TrainingDiverged",
    "channel_histogram",
    "detect_bgr",
    "detect_near_gray",
    "evaluate_bgr",
    "evaluate_neargray",
    "evaluate_ordering",
    "expand_permutations",
    "feature_map",
    "generate_synthetic",
    "grayscale_augment",
    "load_corpus",
    "load_estimator",
    "loss_grad_delta",
    "masked_mean_pool",
    "pair_probability",
    "pair_targets",
    "permute_channels",
    "predict_order",
    "ranking_loss",
    "restore_rgb",
    "save_corpus",
    "score_channel",
    "score_image",
    "score_pair",
    "softmax_entropy",
    "split_corpus",
    "sweep_tau",
    "train_bgr",
    "train_orderer",
]
