"""Versioned checkpoint container: a self-describing npz archive of named
float arrays plus a JSON metadata record (model kind, class vocabulary,
widths, ranking and training configuration, RNG seed).

Arrays round-trip bit-exactly, which is what makes save -> load reproduce
scores to the last bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

FORMAT_VERSION = 1

#: Recognised model kinds, matching the CLI's train subcommand names.
KINDS = ("orderer", "bgr", "softmax6", "softmax2", "shallow")

_META_KEY = "__meta__"
_ARRAY_PREFIX = "array/"


class CheckpointError(Exception):
    """A checkpoint file is malformed or of an unexpected kind/version."""


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    arrays: dict[str, np.ndarray]
    meta: dict[str, Any]


def save_checkpoint(
    path: str | Path,
    kind: str,
    arrays: dict[str, np.ndarray],
    meta: dict[str, Any],
) -> None:
    if kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    header = dict(meta)
    header["format_version"] = FORMAT_VERSION
    header["kind"] = kind
    header["array_names"] = sorted(arrays)
    payload = {_META_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, arr in arrays.items():
        payload[_ARRAY_PREFIX + name] = arr
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        with np.load(path) as bundle:
            if _META_KEY not in bundle:
                raise CheckpointError(f"{path}: not a checkpoint (missing metadata)")
            meta = json.loads(bundle[_META_KEY].tobytes().decode())
            arrays = {
                name[len(_ARRAY_PREFIX) :]: bundle[name]
                for name in bundle.files
                if name.startswith(_ARRAY_PREFIX)
            }
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from exc
    version = meta.pop("format_version", None)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    kind = meta.pop("kind", None)
    if kind not in KINDS:
        raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
    expected = meta.pop("array_names", None)
    if expected is not None and sorted(arrays) != expected:
        raise CheckpointError(f"{path}: array set does not match manifest")
    return Checkpoint(kind=kind, arrays=arrays, meta=meta)


def state_dict_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    """Module parameters/buffers as plain numpy arrays."""
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_state_arrays(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    """Restore a module's state from numpy arrays, strictly."""
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in arrays.items()}
    module.load_state_dict(state, strict=True)
