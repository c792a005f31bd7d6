"""Experiment configuration: one JSON file drives every CLI command.

Sections: ``paths``, ``dataset``, ``pseudo``, ``loss``, ``train``, and
optionally ``sweep``. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError, VlplError
from .losses import LossConfig, LossVariant
from .probe import TrainConfig
from .pseudo_label import PseudoLabelConfig
from .sweep import DEFAULT_TAUS, DEFAULT_THETAS


@dataclass(frozen=True)
class PathsConfig:
    image_embeddings: str | None = None
    label_embeddings: str | None = None
    annotations: str | None = None
    output_dir: str = "out"


@dataclass(frozen=True)
class DatasetConfig:
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("val_fraction", "test_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"dataset.{name} must be in (0, 1), got {v}")


@dataclass(frozen=True)
class SweepGridConfig:
    taus: tuple[float, ...] = DEFAULT_TAUS
    thetas: tuple[float, ...] = DEFAULT_THETAS
    deltas: tuple[float, ...] = (0.0,)
    smoothing: tuple[bool, ...] = (True,)
    repeats: int = 3

    def __post_init__(self):
        for name in ("taus", "thetas", "deltas", "smoothing"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ConfigError(f"sweep.{name} must be non-empty")
        if self.repeats < 1:
            raise ConfigError(f"sweep.repeats must be >= 1, got {self.repeats}")


@dataclass(frozen=True)
class ExperimentConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    pseudo: PseudoLabelConfig = field(default_factory=lambda: PseudoLabelConfig(tau=0.03, theta=0.3))
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepGridConfig | None = None

    def train_config(self) -> TrainConfig:
        """Train section with the loss section attached."""
        return dataclasses.replace(self.train, loss=self.loss)

    def to_dict(self) -> dict:
        return {
            "paths": dataclasses.asdict(self.paths),
            "dataset": dataclasses.asdict(self.dataset),
            "pseudo": dataclasses.asdict(self.pseudo),
            "loss": {
                "variant": self.loss.variant.value,
                "alpha": self.loss.alpha,
                "beta": self.loss.beta,
                "gamma": self.loss.gamma,
                "rho": self.loss.rho,
                "smoothing_enabled": self.loss.smoothing_enabled,
            },
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "lr": self.train.lr,
                "seed": self.train.seed,
                "shuffle": self.train.shuffle,
                "hidden": self.train.hidden,
            },
            "sweep": dataclasses.asdict(self.sweep) if self.sweep is not None else None,
        }

    def dump_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _build_section(cls, section: dict, name: str, **extra):
    allowed = {f.name for f in dataclasses.fields(cls)} - set(extra)
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in config section '{name}': {sorted(unknown)}")
    try:
        return cls(**section, **extra)
    except VlplError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{name}': {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - {"paths", "dataset", "pseudo", "loss", "train", "sweep"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        paths = _build_section(PathsConfig, raw.get("paths", {}), "paths")
        ds = _build_section(DatasetConfig, raw.get("dataset", {}), "dataset")
        pseudo_raw = dict(raw.get("pseudo", {}))
        pseudo_raw.setdefault("tau", 0.03)
        pseudo_raw.setdefault("theta", 0.3)
        pseudo = _build_section(PseudoLabelConfig, pseudo_raw, "pseudo")
        loss_raw = dict(raw.get("loss", {}))
        if "variant" in loss_raw:
            try:
                loss_raw["variant"] = LossVariant(loss_raw["variant"])
            except ValueError as exc:
                raise ConfigError(
                    f"loss.variant must be one of {[v.value for v in LossVariant]}"
                ) from exc
        loss = _build_section(LossConfig, loss_raw, "loss")
        train_raw = dict(raw.get("train", {}))
        if "loss" in train_raw:
            raise ConfigError("the loss belongs in the top-level 'loss' section, not 'train'")
        train = _build_section(TrainConfig, train_raw, "train")
        sweep = None
        if raw.get("sweep") is not None:
            sweep = _build_section(SweepGridConfig, raw["sweep"], "sweep")
    except ConfigError:
        raise
    except VlplError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(paths=paths, dataset=ds, pseudo=pseudo, loss=loss, train=train, sweep=sweep)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    return config_from_dict(raw)


def require_file(path: str | None, what: str) -> str:
    if not path:
        raise ConfigError(f"config is missing the {what} path")
    if not os.path.exists(path):
        raise ConfigError(f"{what} path does not exist: {path}")
    return path
