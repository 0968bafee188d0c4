"""Typed run configuration: JSON in, strict validation, dotted overrides.

Every run is described by one RunConfig tree.  Loading rejects unknown keys
so typos fail loudly, and `apply_overrides` lets the command line patch any
leaf with `section.field=value` syntax (values parsed as JSON when possible,
kept as strings otherwise).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class ModelConfig:
    embed_dim: int = 64
    hidden_dim: int = 200
    layers: int = 3
    embed_dropout: float = 0.1
    lstm_dropout: float = 0.4
    mlp_dim: int = 150
    mlp_dropout: float = 0.2
    max_span_len: int | None = None
    pooling: str = "attention"      # attention | mean | max
    fusion: str = "gate"            # gate | add | concat
    span_mlps: bool = False
    use_regularity: bool = True

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "layers", "mlp_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        for name in ("embed_dropout", "lstm_dropout", "mlp_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"model.{name} must be in [0, 1)")
        if self.max_span_len is not None and self.max_span_len < 1:
            raise ConfigError("model.max_span_len must be positive or null")
        if self.pooling not in ("attention", "mean", "max"):
            raise ConfigError(f"model.pooling: unknown mode {self.pooling!r}")
        if self.fusion not in ("gate", "add", "concat"):
            raise ConfigError(f"model.fusion: unknown mode {self.fusion!r}")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    lambda_aware: float = 1.0
    lambda_agnostic: float = 1.0
    lambda_orth: float = 0.5
    loss_average: str = "sentence"  # sentence | span
    neg_keep_rate: float = 1.0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("train.epochs, batch_size, eval_every must be positive")
        if self.lr <= 0 or self.clip_norm <= 0 or self.eps <= 0:
            raise ConfigError("train.lr, clip_norm, eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("train.beta1 and beta2 must be in [0, 1)")
        if min(self.lambda_aware, self.lambda_agnostic, self.lambda_orth) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.loss_average not in ("sentence", "span"):
            raise ConfigError(f"train.loss_average: unknown mode {self.loss_average!r}")
        if not 0.0 < self.neg_keep_rate <= 1.0:
            raise ConfigError("train.neg_keep_rate must be in (0, 1]")


@dataclass
class DecodeConfig:
    flat: bool = False


@dataclass
class DataConfig:
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    pretrained_embeddings: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    precision: str = "single"
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def __post_init__(self):
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be 'single' or 'double', got {self.precision!r}")


def _coerce(value: Any, hint: Any, path: str) -> Any:
    origin = get_origin(hint)
    if origin is not None and str(origin) in ("<class 'types.UnionType'>", "typing.Union"):
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if dataclasses.is_dataclass(hint):
        return build_config(hint, value, path)
    if hint is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported config field type {hint!r}")


def build_config(cls, raw: Any, path: str = "") -> Any:
    """Construct a config dataclass from a plain dict, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or cls.__name__}: expected an object, got {raw!r}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        where = f" in {path}" if path else ""
        raise ConfigError(f"unknown config keys{where}: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in raw:
            sub = f"{path}.{f.name}" if path else f.name
            kwargs[f.name] = _coerce(raw[f.name], hints[f.name], sub)
    return cls(**kwargs)


def load_run_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from None
    raw = apply_overrides(raw, overrides)
    return build_config(RunConfig, raw)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Patch a raw config dict with `dotted.path=value` assignments."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        dotted, _, text = item.partition("=")
        keys = dotted.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {item!r} has an empty path segment")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-object")
        node[keys[-1]] = value
    return raw


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def write_config_echo(cfg, out_dir: str | Path, name: str = "resolved_config.json") -> Path:
    """Record the fully resolved configuration next to a run's outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
