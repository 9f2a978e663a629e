"""Corpus handling: samples with ground-truth masks, permutation and grayscale
augmentation, a synthetic desk-scale generator, and the on-disk corpus layout.

Images are channel-last float32 arrays with values in [0, 1], stored on disk
in ground-truth RGB order; permutations are applied only in memory so the
ground truth stays unambiguous. Masks are binary per-class maps decoded from
an indexed label image (pixel value = class index, 0 = unlabeled).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .ranking import ChannelPermutation, PairTargets, pair_targets

#: Rec. 601 luma weights used for grayscale augmentation.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

#: Default class palette of the synthetic generator: name -> (mean RGB, jitter std).
#: Means encode the color priors the scorer is meant to learn (sky is blue-ish,
#: vegetation green-ish, skin red/yellow-ish, backdrop neutral gray).
DEFAULT_PALETTE = {
    "sky": ((0.45, 0.65, 0.95), 0.06),
    "vegetation": ((0.25, 0.60, 0.25), 0.06),
    "skin": ((0.85, 0.65, 0.50), 0.06),
}

#: Per-pixel texture noise added on top of the per-region color draw.
PIXEL_NOISE_STD = 0.02


class CorpusError(Exception):
    """A corpus directory violates the expected layout or manifest."""


@dataclass(frozen=True)
class MaskStack:
    """Binary masks, one per class in ``class_vocab``, aligned to an image grid.

    Masks may overlap or leave pixels uncovered; pooling treats each mask
    independently and never assumes a partition.
    """

    masks: np.ndarray  # (N, H, W) uint8 in {0, 1}
    class_vocab: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.masks.ndim != 3 or self.masks.shape[0] < 1:
            raise ValueError(f"masks must be (N, H, W) with N >= 1, got {self.masks.shape}")
        if len(self.class_vocab) != self.masks.shape[0]:
            raise ValueError(
                f"{len(self.class_vocab)} class names for {self.masks.shape[0]} masks"
            )
        vals = np.unique(self.masks)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]  # type: ignore[return-value]

    def __len__(self) -> int:
        return self.masks.shape[0]


@dataclass(frozen=True)
class Sample:
    """One corpus entry: an RGB-ordered image plus its ground-truth masks."""

    id: str
    image: np.ndarray  # (H, W, 3) float32 in [0, 1], RGB order
    masks: MaskStack

    def __post_init__(self) -> None:
        validate_image(self.image)
        if self.image.shape[:2] != self.masks.shape:
            raise ValueError(
                f"sample {self.id}: image {self.image.shape[:2]} vs masks {self.masks.shape}"
            )


@dataclass(frozen=True)
class PermutedSample:
    """A training/eval item: a channel-rearranged image with its ranking targets."""

    id: str
    image: np.ndarray
    true_perm: ChannelPermutation
    targets: PairTargets
    masks: MaskStack


def validate_image(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    if image.size == 0:
        raise ValueError("image has no pixels")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    lo, hi = float(image.min()), float(image.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")


def permute_channels(image: np.ndarray, perm: ChannelPermutation) -> np.ndarray:
    """Rearrange an RGB-ordered image's planes into the given layout (lossless)."""
    return perm.apply(image)


def expand_permutations(
    sample: Sample,
    mode: str = "all6",
    rng: np.random.Generator | None = None,
) -> list[PermutedSample]:
    """Emit permuted variants of a sample with matching pairwise targets.

    Modes: "all6" emits one variant per layout, "rgb_bgr" only the RGB/BGR
    pair, "single_random" one rng-drawn layout.
    """
    if mode == "all6":
        perms = ChannelPermutation.orderings()
    elif mode == "rgb_bgr":
        perms = (ChannelPermutation("RGB"), ChannelPermutation("BGR"))
    elif mode == "single_random":
        if rng is None:
            raise ValueError("single_random mode requires an rng")
        perms = (ChannelPermutation.orderings()[rng.integers(0, 6)],)
    else:
        raise ValueError(f"unknown expansion mode {mode!r}")
    return [
        PermutedSample(
            id=sample.id,
            image=perm.apply(sample.image),
            true_perm=perm,
            targets=pair_targets(perm),
            masks=sample.masks,
        )
        for perm in perms
    ]


def luminance(image: np.ndarray) -> np.ndarray:
    """Luma plane of an RGB-ordered image."""
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    return (image.astype(np.float64) @ w).astype(np.float32)


def grayscale_augment(
    sample: Sample,
    rng: np.random.Generator,
    n_patches: int | None = None,
    max_patch_fraction: float = 0.025,
) -> PermutedSample:
    """Near-grayscale variant: three luminance planes plus optional small
    polychromatic patches, with all pairwise targets 1/2.

    ``n_patches=None`` draws 0-2 patches; ``n_patches=0`` yields a pure
    grayscale image with three bit-identical planes. Each patch is an
    axis-aligned ellipse covering at most ``max_patch_fraction`` of the image.
    """
    luma = luminance(sample.image)
    gray = np.repeat(luma[:, :, None], 3, axis=2)
    if n_patches is None:
        n_patches = int(rng.integers(0, 3))
    h, w = luma.shape
    palette = list(DEFAULT_PALETTE.values())
    for _ in range(n_patches):
        # ellipse area pi*ra*rb <= max_patch_fraction * h * w
        max_area = max_patch_fraction * h * w
        ra = rng.uniform(1.5, max(1.6, 0.5 * np.sqrt(max_area / np.pi)))
        rb = min(ra, max_area / (np.pi * ra))
        cy = rng.uniform(ra, max(ra + 1e-6, h - ra))
        cx = rng.uniform(rb, max(rb + 1e-6, w - rb))
        yy, xx = np.ogrid[:h, :w]
        inside = ((yy - cy) / ra) ** 2 + ((xx - cx) / rb) ** 2 <= 1.0
        mean, std = palette[rng.integers(0, len(palette))]
        color = np.clip(np.asarray(mean) + rng.normal(0.0, std, 3), 0.0, 1.0)
        gray[inside] = color.astype(np.float32)
    gray = np.clip(gray, 0.0, 1.0).astype(np.float32)
    perm = ChannelPermutation.gray()
    return PermutedSample(
        id=sample.id,
        image=gray,
        true_perm=perm,
        targets=pair_targets(perm),
        masks=sample.masks,
    )


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic corpus generator.

    ``palette`` maps class name -> ((mean R, G, B), per-sample jitter std);
    the backdrop class is always present and drawn as jittered neutral gray.
    The seed fixes the whole corpus bit-exactly.
    """

    image_size: tuple[int, int] = (64, 64)
    palette: dict[str, tuple[tuple[float, float, float], float]] = field(
        default_factory=lambda: dict(DEFAULT_PALETTE)
    )
    shapes_per_image: tuple[int, int] = (1, 3)
    seed: int = 0

    def __post_init__(self) -> None:
        h, w = self.image_size
        if h < 8 or w < 8:
            raise ValueError(f"image_size too small: {self.image_size}")
        if not self.palette:
            raise ValueError("palette must name at least one class")
        for name, (mean, std) in self.palette.items():
            if not all(0.0 <= m <= 1.0 for m in mean):
                raise ValueError(f"palette mean for {name!r} outside [0, 1]: {mean}")
            if std < 0:
                raise ValueError(f"palette std for {name!r} negative")
        lo, hi = self.shapes_per_image
        if not (0 <= lo <= hi):
            raise ValueError(f"invalid shapes_per_image range {self.shapes_per_image}")

    @property
    def class_vocab(self) -> tuple[str, ...]:
        return ("backdrop",) + tuple(self.palette.keys())

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthSpec":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        kwargs = {}
        if "image_size" in raw:
            kwargs["image_size"] = tuple(raw["image_size"])
        if "shapes_per_image" in raw:
            kwargs["shapes_per_image"] = tuple(raw["shapes_per_image"])
        if "seed" in raw:
            kwargs["seed"] = int(raw["seed"])
        if "palette" in raw:
            kwargs["palette"] = {
                name: (tuple(entry["mean"]), float(entry.get("std", 0.06)))
                for name, entry in raw["palette"].items()
            }
        unknown = set(raw) - {"image_size", "shapes_per_image", "seed", "palette"}
        if unknown:
            raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_file(self, path: str | Path) -> None:
        doc = {
            "image_size": list(self.image_size),
            "shapes_per_image": list(self.shapes_per_image),
            "seed": self.seed,
            "palette": {
                name: {"mean": list(mean), "std": std}
                for name, (mean, std) in self.palette.items()
            },
        }
        with open(path, "w") as fh:
            yaml.safe_dump(doc, fh, sort_keys=True)


def _render_sample(spec: SynthSpec, index: int, rng: np.random.Generator) -> Sample:
    h, w = spec.image_size
    vocab = spec.class_vocab
    names = list(spec.palette.keys())

    # Region layout: backdrop everywhere, a sky band on top, a vegetation-like
    # band at the bottom (second palette class), and elliptical blobs of the
    # remaining classes. Label indices are 1-based positions in the vocab.
    label = np.full((h, w), 1, dtype=np.uint8)  # backdrop
    band_classes = names[:2]
    blob_classes = names[2:] or names[:1]
    if band_classes:
        top = int(rng.uniform(0.15, 0.40) * h)
        label[:top] = 1 + 1 + names.index(band_classes[0])
    if len(band_classes) > 1:
        bottom = int(rng.uniform(0.15, 0.40) * h)
        label[h - bottom :] = 1 + 1 + names.index(band_classes[1])
    n_blobs = int(rng.integers(spec.shapes_per_image[0], spec.shapes_per_image[1] + 1))
    yy, xx = np.ogrid[:h, :w]
    for _ in range(n_blobs):
        name = blob_classes[rng.integers(0, len(blob_classes))]
        ra = rng.uniform(0.08, 0.20) * h
        rb = rng.uniform(0.08, 0.20) * w
        cy = rng.uniform(0.25 * h, 0.75 * h)
        cx = rng.uniform(0.15 * w, 0.85 * w)
        inside = ((yy - cy) / ra) ** 2 + ((xx - cx) / rb) ** 2 <= 1.0
        label[inside] = 1 + 1 + names.index(name)

    image = np.empty((h, w, 3), dtype=np.float32)
    gray = rng.uniform(0.25, 0.75)
    colors = {1: np.full(3, gray)}
    for k, name in enumerate(names):
        mean, std = spec.palette[name]
        colors[k + 2] = np.clip(np.asarray(mean) + rng.normal(0.0, std, 3), 0.0, 1.0)
    noise = rng.normal(0.0, PIXEL_NOISE_STD, (h, w, 3))
    for idx, color in colors.items():
        image[label == idx] = color
    image = np.clip(image + noise, 0.0, 1.0).astype(np.float32)

    masks = np.stack([(label == i + 1).astype(np.uint8) for i in range(len(vocab))])
    return Sample(
        id=f"synth-{index:05d}",
        image=image,
        masks=MaskStack(masks=masks, class_vocab=vocab),
    )


def generate_synthetic(spec: SynthSpec, count: int) -> list[Sample]:
    """Generate ``count`` samples with exact masks; bit-reproducible from the seed.

    Each sample draws from its own child seed so the corpus is independent of
    generation order or worker layout.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    children = np.random.SeedSequence(spec.seed).spawn(count)
    return [
        _render_sample(spec, i, np.random.default_rng(child))
        for i, child in enumerate(children)
    ]


def save_corpus(samples: list[Sample], root: str | Path) -> None:
    """Write samples in the corpus layout: images/, masks/, classes.txt."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    if not samples:
        raise ValueError("refusing to write an empty corpus")
    vocab = samples[0].masks.class_vocab
    for sample in samples:
        if sample.masks.class_vocab != vocab:
            raise ValueError(f"sample {sample.id} disagrees on class vocabulary")
        img8 = np.clip(np.rint(sample.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8, mode="RGB").save(root / "images" / f"{sample.id}.png")
        label = np.zeros(sample.masks.shape, dtype=np.uint8)
        for i in range(len(vocab)):
            label[sample.masks.masks[i] == 1] = i + 1
        Image.fromarray(label, mode="L").save(root / "masks" / f"{sample.id}.png")
    (root / "classes.txt").write_text("".join(f"{name}\n" for name in vocab))


def load_corpus(root: str | Path) -> list[Sample]:
    """Load a corpus directory into samples, ordered deterministically by id.

    An image without a mask, or a mask pixel whose class index exceeds the
    manifest, is a hard error naming the offending id.
    """
    root = Path(root)
    images_dir = root / "images"
    img_paths = sorted(images_dir.glob("*.png")) if images_dir.is_dir() else []
    if not img_paths:
        return []
    manifest = root / "classes.txt"
    if not manifest.is_file():
        raise CorpusError(f"missing classes manifest: {manifest}")
    vocab = tuple(line.strip() for line in manifest.read_text().splitlines() if line.strip())
    if not vocab:
        raise CorpusError(f"empty classes manifest: {manifest}")

    samples = []
    for img_path in img_paths:
        sample_id = img_path.stem
        mask_path = root / "masks" / f"{sample_id}.png"
        image_u8 = np.asarray(Image.open(img_path).convert("RGB"))
        samples.append(build_sample_from_files(sample_id, image_u8, mask_path, vocab))
    return samples


def decode_label_map(label: np.ndarray, vocab: tuple[str, ...], sample_id: str) -> MaskStack:
    """Indexed label map -> one binary mask per manifest class (0 = unlabeled)."""
    if label.max(initial=0) > len(vocab):
        raise CorpusError(
            f"sample {sample_id!r}: class index {int(label.max())} exceeds "
            f"manifest of {len(vocab)} classes"
        )
    masks = np.stack([(label == i + 1).astype(np.uint8) for i in range(len(vocab))])
    return MaskStack(masks=masks, class_vocab=vocab)


def build_sample_from_files(
    sample_id: str,
    image_u8: np.ndarray,
    mask_path: str | Path,
    vocab: tuple[str, ...],
) -> Sample:
    """Assemble a Sample from a decoded 8-bit image and its label-map file."""
    mask_path = Path(mask_path)
    if not mask_path.is_file():
        raise CorpusError(f"sample {sample_id!r} has no mask at {mask_path}")
    label = np.asarray(Image.open(mask_path).convert("L"))
    if label.shape != image_u8.shape[:2]:
        raise CorpusError(
            f"sample {sample_id!r}: mask shape {label.shape} vs image {image_u8.shape[:2]}"
        )
    image = image_u8.astype(np.float32) / 255.0
    return Sample(id=sample_id, image=image, masks=decode_label_map(label, vocab, sample_id))


def split_corpus(
    samples: list[Sample],
    val_buckets: int = 1,
    test_buckets: int = 1,
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Stable 80/10/10-style split by id hash (sha1 bucket of 10)."""
    train, val, test = [], [], []
    for sample in samples:
        bucket = int(hashlib.sha1(sample.id.encode()).hexdigest(), 16) % 10
        if bucket < 10 - val_buckets - test_buckets:
            train.append(sample)
        elif bucket < 10 - test_buckets:
            val.append(sample)
        else:
            test.append(sample)
    return train, val, test
