"""Experiment configuration: JSON in, validated dataclasses out.

A config file has three sections.  "network" and "training" mirror
NetworkSpec and TrainConfig field for field; "data" selects either the
built-in glyph generator or a pair of IDX files.  Every validation
failure names the offending field as "section.field: why", which the CLI
surfaces verbatim before exiting.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .data import GlyphConfig
from .losses import LossWeights
from .networks import NetworkSpec
from .training import TrainConfig


class ConfigError(Exception):
    """Malformed experiment config; message names the field."""


@dataclasses.dataclass(frozen=True)
class DataConfig:
    kind: str = "glyphs"
    glyphs: GlyphConfig | None = None
    images_path: str | None = None
    labels_path: str | None = None
    counts: tuple[int, int, int] = (2000, 500, 500)
    split_seed: int = 52

    def __post_init__(self):
        if self.kind not in ("glyphs", "idx"):
            raise ValueError(f"kind must be 'glyphs' or 'idx', got {self.kind!r}")
        if self.kind == "idx" and (self.images_path is None
                                   or self.labels_path is None):
            raise ValueError("idx data needs images_path and labels_path")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    training: TrainConfig
    data: DataConfig

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "training": train_config_to_dict(self.training),
            "data": data_config_to_dict(self.data),
        }


def train_config_to_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["weights"] = dataclasses.asdict(cfg.weights)
    return d


def data_config_to_dict(cfg: DataConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if cfg.glyphs is not None:
        d["glyphs"] = dataclasses.asdict(cfg.glyphs)
        d["glyphs"]["thickness_grid"] = list(cfg.glyphs.thickness_grid)
        d["glyphs"]["slant_grid"] = list(cfg.glyphs.slant_grid)
        d["glyphs"]["scale_grid"] = list(cfg.glyphs.scale_grid)
    d["counts"] = list(cfg.counts)
    return d


def _check_unknown(section: str, given: dict, allowed) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown field")


def _build(section: str, cls, given: dict, **overrides):
    """Construct a dataclass from a JSON dict, mapping errors to fields."""
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object, got "
                          f"{type(given).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _check_unknown(section, given, fields)
    kwargs = dict(given)
    kwargs.update(overrides)
    # JSON has no tuples; coerce lists for tuple-typed fields up front.
    for name, value in list(kwargs.items()):
        if isinstance(value, list):
            kwargs[name] = tuple(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _parse_network(given: dict) -> NetworkSpec:
    for required in ("image_dim", "target_dim", "latent_dim", "target_kind"):
        if required not in given:
            raise ConfigError(f"network.{required}: required field missing")
    return _build("network", NetworkSpec, given)


def _parse_training(given: dict) -> TrainConfig:
    weights_part = given.pop("weights", {})
    weights = _build("training.weights", LossWeights, weights_part)
    return _build("training", TrainConfig, given, weights=weights)


def _parse_data(given: dict) -> DataConfig:
    glyphs_part = given.pop("glyphs", None)
    glyphs = None
    if glyphs_part is not None:
        glyphs = _build("data.glyphs", GlyphConfig, glyphs_part)
    return _build("data", DataConfig, given, glyphs=glyphs)


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    _check_unknown("config", raw, ("network", "training", "data"))
    if "network" not in raw:
        raise ConfigError("network: required section missing")
    network = _parse_network(dict(raw["network"]))
    training_part = dict(raw.get("training", {}))
    training_part.setdefault("mode", network.target_kind)
    training = _parse_training(training_part)
    if training.mode != network.target_kind:
        raise ConfigError(
            f"training.mode: {training.mode!r} does not match "
            f"network.target_kind {network.target_kind!r}")
    data = _parse_data(dict(raw.get("data", {})))
    if data.kind == "glyphs" and data.glyphs is None:
        side = int(round(network.image_dim ** 0.5))
        if side * side != network.image_dim:
            raise ConfigError(
                "data.glyphs: required when network.image_dim is not a "
                "perfect square")
        mode = network.target_kind
        data = dataclasses.replace(
            data, glyphs=GlyphConfig(side=side, mode=mode))
    if data.glyphs is not None:
        if data.glyphs.side ** 2 != network.image_dim:
            raise ConfigError(
                f"data.glyphs.side: {data.glyphs.side}^2 != "
                f"network.image_dim {network.image_dim}")
        if data.glyphs.mode != network.target_kind:
            raise ConfigError(
                f"data.glyphs.mode: {data.glyphs.mode!r} does not match "
                f"network.target_kind {network.target_kind!r}")
        label_width = len(data.glyphs.shapes)
        if data.glyphs.mode == "multilabel":
            label_width += 3  # thick, slanted, large style bits
        if network.target_dim != label_width:
            raise ConfigError(
                f"network.target_dim: glyph corpus produces {label_width} "
                f"label columns, not {network.target_dim}")
    return ExperimentConfig(network=network, training=training, data=data)


def load_experiment_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_experiment_config(raw)
