"""Model checkpoint persistence.

A checkpoint is a zip container with a ``meta.json`` (format version, model
config, taxonomy, feature config, training metadata, tensor manifest) and
one raw little-endian binary per named tensor.  Zip entries use a fixed
timestamp so identical checkpoints are identical files byte for byte.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Taxonomy
from .features import MelConfig
from .network import ModelConfig

__all__ = ["CHECKPOINT_VERSION", "ModelCheckpoint", "load_checkpoint", "save_checkpoint"]

CHECKPOINT_VERSION = 1

_FIXED_DATE = (1980, 1, 1, 0, 0, 0)

_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class ModelCheckpoint:
    """Classifier parameters plus everything needed to reuse them: the
    taxonomy the output head predicts over (index i = labels[i]), the model
    and feature configs, and free-form training metadata."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    taxonomy: Taxonomy
    mel_config: MelConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.config.num_classes != len(self.taxonomy):
            raise ValueError(
                f"model has {self.config.num_classes} classes but taxonomy "
                f"{self.taxonomy.name!r} has {len(self.taxonomy)} labels"
            )
        for name, tensor in self.params.items():
            if not np.all(np.isfinite(tensor)):
                raise ValueError(f"checkpoint tensor {name!r} has non-finite values")


def save_checkpoint(checkpoint: ModelCheckpoint, path: str | Path) -> Path:
    path = Path(path)
    tensors = []
    for name, tensor in checkpoint.params.items():
        dtype = str(tensor.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"tensor {name!r} has unsupported dtype {dtype}")
        tensors.append({"name": name, "shape": list(tensor.shape), "dtype": dtype})
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": checkpoint.config.to_dict(),
        "taxonomy": {"name": checkpoint.taxonomy.name,
                     "labels": list(checkpoint.taxonomy.labels)},
        "mel_config": checkpoint.mel_config.to_dict(),
        "metadata": checkpoint.metadata,
        "tensors": tensors,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_FIXED_DATE)
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for name, tensor in checkpoint.params.items():
            info = zipfile.ZipInfo(f"tensors/{name}.bin", date_time=_FIXED_DATE)
            zf.writestr(info, np.ascontiguousarray(tensor).astype(
                _DTYPES[str(tensor.dtype)], copy=False).tobytes())
    return path


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    path = Path(path)
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        version = meta.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {version!r} in {path} "
                f"(expected {CHECKPOINT_VERSION})"
            )
        params: dict[str, np.ndarray] = {}
        for spec in meta["tensors"]:
            raw = zf.read(f"tensors/{spec['name']}.bin")
            arr = np.frombuffer(raw, dtype=_DTYPES[spec["dtype"]]).reshape(spec["shape"])
            params[spec["name"]] = arr.astype(spec["dtype"])
    return ModelCheckpoint(
        config=ModelConfig.from_dict(meta["model_config"]),
        params=params,
        taxonomy=Taxonomy(
            name=meta["taxonomy"]["name"], labels=tuple(meta["taxonomy"]["labels"])
        ),
        mel_config=MelConfig.from_dict(meta["mel_config"]),
        metadata=meta.get("metadata", {}),
    )
