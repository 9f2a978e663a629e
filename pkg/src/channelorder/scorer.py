"""The per-channel scoring function: a single-plane U-Net feature extractor,
semantic-mask mean pooling into per-class color representations, and a learned
prior-weight vector whose inner product with the pooled vector is the channel
score. Also the two-plane conv scorer used by the RGB-vs-BGR detector.

Scoring the three planes of an image independently through one shared network
is what makes the scores permutation-equivariant: permuting input planes
permutes the outputs bit-exactly.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import MaskStack, validate_image
from .ranking import ScoreTriple

#: Full-scale encoder widths; the decoder mirrors them back down.
FULL_WIDTHS = (32, 64, 128, 256)

#: CPU-friendly widths used by the desk-scale configuration.
DESK_WIDTHS = (8, 16, 32, 64)

#: Conv widths of the two-plane pair scorer.
PAIR_WIDTHS = (16, 32, 64)

#: Spatial reduction of the encoder; inputs are padded to a multiple of this.
DOWNSAMPLE_FACTOR = 16

#: Added to mask areas in mean pooling so empty masks pool to ~0.
POOL_EPS = 1e-6


def pad_to_multiple(x: torch.Tensor, multiple: int = DOWNSAMPLE_FACTOR) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad the trailing two dims up to a multiple; returns (padded, original hw)."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        if ph >= h or pw >= w:
            raise ValueError(
                f"input {h}x{w} too small to reflect-pad to a multiple of {multiple}"
            )
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    return x, (h, w)


class _ConvStage(nn.Sequential):
    """Two 3x3 conv + ReLU blocks at a fixed width."""

    def __init__(self, cin: int, cout: int):
        super().__init__(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(inplace=True),
        )


class _UpConv(nn.Module):
    """Nearest-neighbour 2x upsample followed by a 3x3 conv + ReLU."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.conv(F.interpolate(x, scale_factor=2, mode="nearest")))


class PlaneUNet(nn.Module):
    """Encoder-decoder over one intensity plane, emitting one feature plane.

    Four encoder stages with 2x max-pool after each, four decoder stages with
    nearest-upsample + conv and concatenated skip connections. The final conv
    maps to a single channel with no output nonlinearity, so the feature plane
    is free to take either sign.
    """

    def __init__(self, widths: tuple[int, int, int, int] = DESK_WIDTHS):
        super().__init__()
        if len(widths) != 4 or any(w < 1 for w in widths):
            raise ValueError(f"widths must be four positive ints, got {widths}")
        w1, w2, w3, w4 = widths
        self.widths = tuple(widths)
        self.enc1 = _ConvStage(1, w1)
        self.enc2 = _ConvStage(w1, w2)
        self.enc3 = _ConvStage(w2, w3)
        self.enc4 = _ConvStage(w3, w4)
        self.pool = nn.MaxPool2d(2)
        self.up1 = _UpConv(w4, w3)
        self.dec1 = _ConvStage(w3 + w4, w3)
        self.up2 = _UpConv(w3, w2)
        self.dec2 = _ConvStage(w2 + w3, w2)
        self.up3 = _UpConv(w2, w1)
        self.dec3 = _ConvStage(w1 + w2, w1)
        self.up4 = _UpConv(w1, w1)
        self.dec4 = nn.Sequential(
            nn.Conv2d(w1 + w1, w1, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(w1, 1, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (B, 1, H, W) planes, got {tuple(x.shape)}")
        x, (h, w) = pad_to_multiple(x)
        s1 = self.enc1(x)
        s2 = self.enc2(self.pool(s1))
        s3 = self.enc3(self.pool(s2))
        s4 = self.enc4(self.pool(s3))
        x = self.pool(s4)
        x = self.dec1(torch.cat([self.up1(x), s4], dim=1))
        x = self.dec2(torch.cat([self.up2(x), s3], dim=1))
        x = self.dec3(torch.cat([self.up3(x), s2], dim=1))
        x = self.dec4(torch.cat([self.up4(x), s1], dim=1))
        return x[..., :h, :w]


class ChannelScorer(nn.Module):
    """Scores intensity planes against a fixed class vocabulary.

    forward() is the batched training path; the module-level functions below
    expose the per-plane numpy inference path used everywhere scores must be
    exactly reproducible and equivariant.
    """

    def __init__(self, class_vocab: tuple[str, ...], widths: tuple[int, int, int, int] = DESK_WIDTHS):
        super().__init__()
        if len(class_vocab) < 1:
            raise ValueError("class vocabulary must not be empty")
        self.class_vocab = tuple(class_vocab)
        self.unet = PlaneUNet(widths)
        self.prior_weights = nn.Parameter(torch.ones(len(self.class_vocab)))

    @property
    def widths(self) -> tuple[int, ...]:
        return self.unet.widths

    def forward(self, planes: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        """planes (B, P, H, W) and masks (B, N, H, W) -> scores (B, P)."""
        b, p, h, w = planes.shape
        feats = self.unet(planes.reshape(b * p, 1, h, w)).reshape(b, p, h, w)
        pooled = masked_mean_pool_batch(feats, masks)
        return pooled @ self.prior_weights


class PairScorer(nn.Module):
    """Scalar scorer for a two-plane stack (conv+ReLU blocks, GAP, bias-free head)."""

    def __init__(self, widths: tuple[int, int, int] = PAIR_WIDTHS):
        super().__init__()
        w1, w2, w3 = widths
        self.widths = tuple(widths)
        self.features = nn.Sequential(
            nn.Conv2d(2, w1, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(w1, w2, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(w2, w3, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Linear(w3, 1, bias=False)

    def forward(self, pairs: torch.Tensor) -> torch.Tensor:
        """pairs (B, 2, H, W) -> scores (B,)."""
        if pairs.ndim != 4 or pairs.shape[1] != 2:
            raise ValueError(f"expected (B, 2, H, W) stacks, got {tuple(pairs.shape)}")
        x = self.features(pairs)
        x = x.mean(dim=(-2, -1))
        return self.head(x).squeeze(-1)


def masked_mean_pool_batch(feats: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Mean of each feature plane over each mask: (B, P, H, W) x (B, N, H, W) -> (B, P, N)."""
    num = torch.einsum("bphw,bnhw->bpn", feats, masks)
    den = masks.sum(dim=(-2, -1))
    return num / (den.unsqueeze(1) + POOL_EPS)


def zero_parameters(module: nn.Module) -> nn.Module:
    """Set every parameter to zero in place (useful as a null model in tests)."""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


# ---------------------------------------------------------------------------
# Numpy-facing inference path. Each plane goes through the network alone, so
# a plane's score depends only on its own bytes; this is what makes scores
# bit-exactly equivariant under channel permutations.
# ---------------------------------------------------------------------------


def feature_map(channel: np.ndarray, scorer: ChannelScorer) -> np.ndarray:
    """Extract the (H, W) feature plane for one intensity plane."""
    if channel.ndim != 2:
        raise ValueError(f"expected (H, W) plane, got shape {channel.shape}")
    x = torch.from_numpy(np.ascontiguousarray(channel, dtype=np.float32))
    with torch.no_grad():
        out = scorer.unet(x[None, None])
    return out[0, 0].numpy()


def masked_mean_pool(feature: np.ndarray, masks: MaskStack) -> np.ndarray:
    """Per-class mean of a feature plane over each mask; empty masks pool to ~0."""
    if feature.shape != masks.shape:
        raise ValueError(f"feature {feature.shape} vs masks {masks.shape}")
    feats = feature.astype(np.float64)
    out = np.empty(len(masks), dtype=np.float64)
    for n in range(len(masks)):
        m = masks.masks[n].astype(np.float64)
        out[n] = (feats * m).sum() / (m.sum() + POOL_EPS)
    return out


def score_channel(channel: np.ndarray, masks: MaskStack, scorer: ChannelScorer) -> float:
    """Inner product of the prior weights with the plane's pooled class vector."""
    if len(masks) != len(scorer.class_vocab):
        raise ValueError(
            f"mask stack has {len(masks)} classes but scorer expects "
            f"{len(scorer.class_vocab)}"
        )
    pooled = masked_mean_pool(feature_map(channel, scorer), masks)
    alpha = scorer.prior_weights.detach().numpy().astype(np.float64)
    return float(alpha @ pooled)


def score_image(image: np.ndarray, masks: MaskStack, scorer: ChannelScorer) -> ScoreTriple:
    """Score the three planes of a channel-last image independently."""
    validate_image(image)
    if image.shape[:2] != masks.shape:
        raise ValueError(f"image {image.shape[:2]} vs masks {masks.shape}")
    return ScoreTriple(*(score_channel(image[:, :, i], masks, scorer) for i in range(3)))


def score_pair(pair: np.ndarray, scorer: PairScorer) -> float:
    """Score a channel-last (H, W, 2) two-plane stack."""
    if pair.ndim != 3 or pair.shape[-1] != 2:
        raise ValueError(f"expected (H, W, 2) stack, got shape {pair.shape}")
    x = torch.from_numpy(
        np.ascontiguousarray(pair.transpose(2, 0, 1), dtype=np.float32)
    )
    with torch.no_grad():
        out = scorer(x[None])
    return float(out[0])
