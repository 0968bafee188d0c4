"""Checkpoint directory format.

A checkpoint is a directory holding manifest.json (format tag, model config,
vocabulary, parameter names and shapes in model order) and params.bin (the
parameter values as little-endian float64, concatenated in manifest order).
Values are always stored at double precision; loading casts to the active
precision, so a single-precision model round-trips bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelConfig, build_config, config_to_dict
from .corpus import Vocab
from .tensor import ContractError, dtype

FORMAT_TAG = "spanreg-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model, extra: dict | None = None) -> Path:
    """Write model weights and everything needed to rebuild the model."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    named = list(model.params.named())
    manifest = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "model": config_to_dict(model.cfg),
        "vocab": {"chars": model.vocab.chars, "labels": model.vocab.labels},
        "params": [{"name": n, "shape": list(t.data.shape)} for n, t in named],
        "extra": extra or {},
    }
    blob = b"".join(t.data.astype("<f8").tobytes(order="C") for _, t in named)
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (path / "params.bin").write_bytes(blob)
    return path


def load_checkpoint(path: str | Path):
    """Rebuild a model from a checkpoint directory."""
    from .model import Model

    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT_TAG:
        raise ContractError(f"{path} is not a model checkpoint")
    if manifest.get("version") != FORMAT_VERSION:
        raise ContractError(f"unsupported checkpoint version {manifest.get('version')!r}")

    vocab = Vocab(chars=manifest["vocab"]["chars"], labels=manifest["vocab"]["labels"])
    cfg = build_config(ModelConfig, manifest["model"])
    model = Model.init(vocab, cfg, np.random.default_rng(0))

    named = list(model.params.named())
    spec = manifest["params"]
    if [n for n, _ in named] != [p["name"] for p in spec]:
        raise ContractError("checkpoint parameter list does not match the model")
    raw = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
    total = sum(int(np.prod(p["shape"])) for p in spec)
    if raw.size != total:
        raise ContractError(
            f"params.bin holds {raw.size} values, manifest expects {total}"
        )
    offset = 0
    for (name, tensor), p in zip(named, spec):
        shape = tuple(p["shape"])
        if tensor.data.shape != shape:
            raise ContractError(
                f"checkpoint shape {shape} for {name}, model has {tensor.data.shape}"
            )
        n = int(np.prod(shape))
        tensor.data = raw[offset : offset + n].reshape(shape).astype(dtype())
        offset += n
    return model
