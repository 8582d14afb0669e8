"""JSON experiment configuration with ``section.key=value`` overrides."""

from __future__ import annotations

import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from .protomodel import ModelConfig
from .synthgen import SynthConfig
from .textenc import TextEncoderSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthPair:
    source: SynthConfig = field(default_factory=lambda: SynthConfig(seed=1))
    target: SynthConfig = field(
        default_factory=lambda: SynthConfig(seed=2, num_classes=10, videos_per_class=20)
    )


@dataclass(frozen=True)
class Paths:
    data: str = "runs/data"
    checkpoints: str = "runs/checkpoints"
    reports: str = "runs/reports"


# The toy encoder needs a much larger step than a pretrained ViT; the other
# optimiser settings keep their TrainConfig defaults.
SYNTHETIC_TRAIN = TrainConfig(base_lr=3e-3)


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthPair = field(default_factory=SynthPair)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = SYNTHETIC_TRAIN
    paths: Paths = field(default_factory=Paths)
    text: TextEncoderSpec = field(default_factory=TextEncoderSpec)

    def __post_init__(self) -> None:
        for role in ("source", "target"):
            sc = getattr(self.synth, role)
            if sc.embed_dim != self.text.embed_dim:
                raise ConfigError(f"synth.{role}.embed_dim must equal text.embed_dim")
            if sc.frame_dim != self.model.frame_dim:
                raise ConfigError(f"synth.{role}.frame_dim must equal model.frame_dim")
        if self.model.embed_dim != self.text.embed_dim:
            raise ConfigError("model.embed_dim must equal text.embed_dim")

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _check_type(value: Any, tp: Any, where: str) -> Any:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        for arm in typing.get_args(tp):
            if arm is type(None) and value is None:
                return None
        arms = [a for a in typing.get_args(tp) if a is not type(None)]
        return _check_type(value, arms[0], where)
    if origin is typing.Literal:
        if value not in typing.get_args(tp):
            raise ConfigError(f"{where}: expected one of {typing.get_args(tp)}, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected bool, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {tp}")


def _build(cls: type, data: Any, base: Any, where: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key {'.'.join(filter(None, [where, unknown[0]]))}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        sub = f"{where}.{f.name}" if where else f.name
        tp = hints[f.name]
        if is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name], getattr(base, f.name), sub)
        else:
            kwargs[f.name] = _check_type(data[f.name], tp, sub)
    try:
        return replace(base, **kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    out = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(raw)
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, ExperimentConfig(), "")


def parse_config(path: str | Path | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Load ``path`` (or defaults when ``None``), apply dotted overrides, validate."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    return config_from_dict(apply_overrides(data, overrides))
