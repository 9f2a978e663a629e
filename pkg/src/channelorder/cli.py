"""Command-line surface: corpus synthesis, training, evaluation, image fixing,
and the tau sweep.

Configuration is a flat YAML mapping; command-line flags override file values,
which override the documented defaults. Every run writes a manifest with the
resolved configuration so it can be repeated bit-identically. Exit codes:
0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np
import yaml
from PIL import Image

from . import __version__
from .checkpoint import CheckpointError
from .data import (
    CorpusError,
    Sample,
    SynthSpec,
    build_sample_from_files,
    generate_synthetic,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .detectors import detect_near_gray, predict_order, restore_rgb
from .estimators import (
    ChannelOrderer,
    RgbBgrDetector,
    ShallowHistogramOrderer,
    SoftmaxOrderClassifier,
    load_estimator,
)
from .evaluation import (
    SOFTMAX_ENTROPY_TAU,
    build_neargray_items,
    evaluate_bgr,
    evaluate_neargray,
    evaluate_ordering,
    orderer_predictor,
    orderer_statistic,
    plot_neargray_histogram,
    shallow_predictor,
    softmax_bgr_decider,
    softmax_entropy_statistic,
    softmax_predictor,
    sweep_tau,
    bgr_decider,
)

logger = logging.getLogger(__name__)

#: Environment variable naming a default config file.
ENV_CONFIG = "CHANNELORDER_CONFIG"

#: Documented defaults of every flat config key (desk-scale values).
CONFIG_DEFAULTS = {
    "widths": [8, 16, 32, 64],
    "pair_widths": [16, 32, 64],
    "temperature": 0.1,
    "link": "tanh",
    "epochs": 20,
    "batch_size": 16,
    "learning_rate": 1e-3,
    "lr_decay": 0.98,
    "gray_fraction": 0.0,
    "tau": 0.4,
    "bins": 256,
    "seed": 0,
}

MODEL_KINDS = ("orderer", "bgr", "softmax6", "softmax2", "shallow")

_USAGE_ERRORS = (
    click.UsageError,
    ValueError,
    KeyError,
    CorpusError,
    CheckpointError,
    FileNotFoundError,
)


def load_config(path: str | None, overrides: dict) -> dict:
    """Defaults, then the config file, then non-None CLI overrides."""
    resolved = dict(CONFIG_DEFAULTS)
    path = path or os.environ.get(ENV_CONFIG)
    if path:
        with open(path) as fh:
            file_cfg = yaml.safe_load(fh) or {}
        if not isinstance(file_cfg, dict):
            raise ValueError(f"config file {path} must be a flat mapping")
        unknown = set(file_cfg) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
        for key in sorted(set(CONFIG_DEFAULTS) - set(file_cfg)):
            logger.info("config key %r not in %s; using default %r", key, path, resolved[key])
        resolved.update(file_cfg)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


def write_manifest(out_dir: Path, command: str, config: dict, **extra) -> None:
    """Record enough to re-run the command bit-identically; atomic write."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        **extra,
    }
    tmp = out_dir / "run_manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    tmp.replace(out_dir / "run_manifest.json")


def _split_samples(samples: list[Sample], split: str) -> list[Sample]:
    if split == "all":
        return samples
    train, val, test = split_corpus(samples)
    chosen = {"train": train, "val": val, "test": test}[split]
    if not chosen:
        raise ValueError(f"corpus split {split!r} is empty")
    return chosen


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose: bool) -> None:
    """Channel-order tools: detect and fix permuted image planes."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), help="Synth spec YAML.")
@click.option("--count", type=int, required=True, help="Number of samples to generate.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
def synth(spec_path: str | None, count: int, out_dir: str, seed: int | None) -> None:
    """Generate a synthetic corpus with exact masks."""
    if count < 1:
        raise click.UsageError(f"--count must be >= 1, got {count}")
    spec = SynthSpec.from_file(spec_path) if spec_path else SynthSpec()
    if seed is not None:
        spec = SynthSpec(
            image_size=spec.image_size,
            palette=spec.palette,
            shapes_per_image=spec.shapes_per_image,
            seed=seed,
        )
    out = Path(out_dir)
    write_manifest(out, "synth", {"count": count, "seed": spec.seed}, spec=spec_path)
    samples = generate_synthetic(spec, count)
    save_corpus(samples, out)
    spec.to_file(out / "synth_spec.yaml")
    click.echo(f"wrote {len(samples)} samples to {out}")


def _build_estimator(kind: str, cfg: dict):
    common = {
        key: cfg[key]
        for key in ("temperature", "link", "epochs", "batch_size", "learning_rate",
                    "lr_decay", "seed")
    }
    if kind == "orderer":
        return ChannelOrderer(
            widths=tuple(cfg["widths"]),
            gray_fraction=cfg["gray_fraction"],
            tau=cfg["tau"],
            **common,
        )
    if kind == "bgr":
        return RgbBgrDetector(widths=tuple(cfg["pair_widths"]), **common)
    if kind in ("softmax6", "softmax2"):
        classes = 6 if kind == "softmax6" else 2
        return SoftmaxOrderClassifier(classes=classes, widths=tuple(cfg["widths"]), **common)
    if kind == "shallow":
        return ShallowHistogramOrderer(bins=cfg["bins"], **common)
    raise click.UsageError(f"unknown model kind {kind!r}")


@cli.command()
@click.argument("kind", type=click.Choice(MODEL_KINDS))
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Checkpoint file.")
@click.option("--split", type=click.Choice(["train", "all"]), default="train", show_default=True)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--link", type=click.Choice(["tanh", "identity"]), default=None)
def train(kind, corpus_dir, config_path, out_path, split, **overrides) -> None:
    """Train a model and write its checkpoint plus a loss log."""
    cfg = load_config(config_path, overrides)
    out_path = Path(out_path)
    write_manifest(
        out_path.parent, f"train {kind}", cfg, corpus=str(corpus_dir),
        checkpoint=str(out_path), split=split,
    )
    samples = load_corpus(corpus_dir)
    if not samples:
        raise CorpusError(f"no samples in {corpus_dir}")
    subset = _split_samples(samples, split)
    logger.info("training %s on %d samples (%s split)", kind, len(subset), split)
    estimator = _build_estimator(kind, cfg)
    estimator.fit(subset)
    estimator.save(out_path)
    loss_log = out_path.with_suffix(out_path.suffix + ".losses.json")
    loss_log.write_text(json.dumps(estimator.history_) + "\n")
    click.echo(f"checkpoint written to {out_path}")


def _order_predictor_for(estimator):
    if isinstance(estimator, ChannelOrderer):
        return orderer_predictor(estimator.model_), "orderer"
    if isinstance(estimator, SoftmaxOrderClassifier):
        if estimator.model_.n_classes != 6:
            raise CheckpointError("the two-class softmax model cannot rank all six layouts")
        return softmax_predictor(estimator.model_), "softmax6"
    if isinstance(estimator, ShallowHistogramOrderer):
        return shallow_predictor(estimator.model_), "shallow"
    raise CheckpointError(f"{type(estimator).__name__} checkpoints do not support the order task")


@cli.command("eval")
@click.argument("task", type=click.Choice(["order", "bgr", "gray"]))
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Report/plot directory.")
@click.option("--split", type=click.Choice(["train", "val", "test", "all"]), default="test", show_default=True)
@click.option("--tau", type=float, default=None, help="Near-gray threshold (gray task).")
@click.option("--seed", type=int, default=None, help="Seed for the gray eval set construction.")
def eval_cmd(task, ckpt_path, corpus_dir, out_dir, split, tau, seed) -> None:
    """Evaluate a checkpoint; prints the report table and writes report files."""
    estimator = load_estimator(ckpt_path)
    samples = _split_samples(load_corpus(corpus_dir), split)
    result_plot = None

    if task == "order":
        predictor, method = _order_predictor_for(estimator)
        report = evaluate_ordering(predictor, samples, method=method)
    elif task == "bgr":
        if isinstance(estimator, RgbBgrDetector):
            decider, method = bgr_decider(estimator.model_), "bgr"
        elif isinstance(estimator, SoftmaxOrderClassifier) and estimator.model_.n_classes == 2:
            decider, method = softmax_bgr_decider(estimator.model_), "softmax2"
        else:
            raise CheckpointError(
                f"{type(estimator).__name__} checkpoints do not support the bgr task"
            )
        report = evaluate_bgr(decider, samples, method=method)
    else:
        rng = np.random.default_rng(CONFIG_DEFAULTS["seed"] if seed is None else seed)
        items = build_neargray_items(samples, rng)
        if isinstance(estimator, ChannelOrderer):
            statistic, direction, method = (
                orderer_statistic(estimator.model_), "below", "orderer",
            )
            tau = estimator.tau if tau is None else tau
        elif isinstance(estimator, SoftmaxOrderClassifier) and estimator.model_.n_classes == 6:
            statistic, direction, method = (
                softmax_entropy_statistic(estimator.model_), "above", "softmax6",
            )
            tau = SOFTMAX_ENTROPY_TAU if tau is None else tau
        else:
            raise CheckpointError(
                f"{type(estimator).__name__} checkpoints do not support the gray task"
            )
        result = evaluate_neargray(statistic, items, tau, near_gray_if=direction, method=method)
        report = result.report
        result_plot = (result.gray_statistics, result.color_statistics, tau)

    click.echo(report.to_table(), nl=False)
    if out_dir:
        out = Path(out_dir)
        write_manifest(out, f"eval {task}", {"tau": tau, "seed": seed, "split": split},
                       corpus=str(corpus_dir), checkpoint=str(ckpt_path))
        (out / "report.txt").write_text(report.to_table())
        (out / "report.json").write_text(report.to_json())
        if result_plot is not None:
            plot_neargray_histogram(*result_plot, out / "statistic_hist.png")
        click.echo(f"report written to {out}")


@cli.command("sweep-tau")
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test", "all"]), default="val", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False))
def sweep_tau_cmd(ckpt_path, corpus_dir, split, seed, out_dir) -> None:
    """Pick the near-gray threshold by F1 on a labeled validation split."""
    estimator = load_estimator(ckpt_path)
    if not isinstance(estimator, ChannelOrderer):
        raise CheckpointError("tau sweeps apply to orderer checkpoints")
    samples = _split_samples(load_corpus(corpus_dir), split)
    items = build_neargray_items(samples, np.random.default_rng(seed))
    statistic = orderer_statistic(estimator.model_)
    stats = [statistic(ps) for ps in items]
    labels = [ps.true_perm.is_gray for ps in items]
    tau, f1 = sweep_tau(stats, labels)
    click.echo(f"best tau: {tau:.6f}  (F1 {f1:.4f} on {split} split)")
    if out_dir:
        out = Path(out_dir)
        write_manifest(out, "sweep-tau", {"seed": seed, "split": split},
                       corpus=str(corpus_dir), checkpoint=str(ckpt_path))
        (out / "sweep.json").write_text(
            json.dumps({"tau": tau, "f1": f1, "split": split}, sort_keys=True) + "\n"
        )


def _read_image_u8(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.format == "JPEG":
            logger.warning(
                "%s is JPEG; lossy inputs void bit-exact restoration claims", path.name
            )
        elif img.format != "PNG":
            raise ValueError(f"{path}: unsupported image format {img.format}")
        return np.asarray(img.convert("RGB"))


def _collect_fix_inputs(inputs: tuple[str, ...], masks_root: str | None):
    """Yield (image path, mask path, vocab) for corpus roots or bare files."""
    jobs = []
    for raw in inputs:
        path = Path(raw)
        if path.is_dir():
            root = path
            image_paths = sorted((root / "images").glob("*.png"))
            if not image_paths:
                raise CorpusError(f"{root} is not a corpus root (no images/*.png)")
        else:
            if masks_root is None:
                raise click.UsageError(
                    f"{path} is a bare image; provide --masks-root with corpus-layout masks"
                )
            root = Path(masks_root)
            image_paths = [path]
        manifest = root / "classes.txt"
        if not manifest.is_file():
            raise CorpusError(f"missing classes manifest: {manifest}")
        vocab = tuple(l.strip() for l in manifest.read_text().splitlines() if l.strip())
        for image_path in image_paths:
            jobs.append((image_path, root / "masks" / f"{image_path.stem}.png", vocab))
    return jobs


@cli.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--masks-root", type=click.Path(exists=True, file_okay=False),
              help="Corpus-layout root providing masks/ and classes.txt for bare image inputs.")
@click.option("--detect-only", is_flag=True, help="Print layouts without writing images.")
@click.option("--gray-skip", is_flag=True, help="Pass near-gray inputs through unmodified.")
@click.option("--tau", type=float, default=None, help="Near-gray threshold for --gray-skip.")
def fix(inputs, ckpt_path, out_dir, masks_root, detect_only, gray_skip, tau) -> None:
    """Detect each image's channel layout and write an RGB-restored copy."""
    estimator = load_estimator(ckpt_path)
    if not isinstance(estimator, ChannelOrderer):
        raise CheckpointError("fix requires an orderer checkpoint")
    tau = estimator.tau if tau is None else tau
    out = Path(out_dir)
    write_manifest(out, "fix", {"tau": tau, "detect_only": detect_only, "gray_skip": gray_skip},
                   checkpoint=str(ckpt_path), inputs=[str(p) for p in inputs])

    jobs = _collect_fix_inputs(inputs, masks_root)
    failures = 0
    for image_path, mask_path, vocab in jobs:
        if image_path.resolve().parent == out.resolve():
            raise ValueError(f"output dir {out} would overwrite input {image_path}")
        try:
            raw = _read_image_u8(image_path)
            sample = build_sample_from_files(image_path.stem, raw, mask_path, vocab)
        except (OSError, CorpusError, ValueError) as exc:
            logger.warning("skipping %s: %s", image_path.name, exc)
            failures += 1
            continue
        scores = estimator.score_image(sample.image, sample.masks)
        pred = predict_order(scores)
        gray = detect_near_gray(scores, tau)
        flag = " NEARGRAY" if gray.is_near_gray else ""
        click.echo(f"{image_path.name}: {pred.permutation.name}{flag}")
        if detect_only:
            continue
        if gray_skip and gray.is_near_gray:
            shutil.copyfile(image_path, out / image_path.name)
            continue
        restored = restore_rgb(raw, pred)
        Image.fromarray(restored, mode="RGB").save(out / f"{image_path.stem}.png")
    if failures == len(jobs):
        raise RuntimeError("all inputs failed to load")


def main(argv=None) -> int:
    """Entry point with the stable exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except _USAGE_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
