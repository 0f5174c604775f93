"""One YAML document holding every pipeline parameter."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .descriptors import DescriptorConfig
from .graph import GraphConfig
from .matcher import MatchConfig
from .registration import Pose4DoF, RegistrationOptions
from .synth import PerturbationSpec, Placement, SceneSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    # optional name -> kind mapping (YAML or JSON); the built-in vocabulary otherwise
    vocabulary: str | None = None
    output_dir: str = "."


@dataclass(frozen=True)
class PipelineConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    registration: RegistrationOptions = field(default_factory=RegistrationOptions)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def with_seed(self, seed: int) -> PipelineConfig:
        return dataclasses.replace(self, descriptor=dataclasses.replace(self.descriptor, seed=seed))


_SECTIONS = {
    "graph": GraphConfig,
    "descriptor": DescriptorConfig,
    "match": MatchConfig,
    "registration": RegistrationOptions,
    "paths": PathsConfig,
}


def _section(name: str, cls, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key; expected one of {sorted(known)}")
    values = dict(data)
    if "exclude_labels" in values:
        labels = values["exclude_labels"] or []
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise ConfigError(f"{name}.exclude_labels: expected a list of label names")
        values["exclude_labels"] = frozenset(labels)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict | None) -> PipelineConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section; expected one of {sorted(_SECTIONS)}")
    return PipelineConfig(**{name: _section(name, cls, data.get(name)) for name, cls in _SECTIONS.items()})


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        if "exclude_labels" in section:
            section["exclude_labels"] = sorted(section["exclude_labels"])
        out[name] = section
    return out


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def _fields(name: str, cls, data: Any) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key; expected one of {sorted(known)}")
    return dict(data)


def scene_spec_from_dict(data: dict, seed: int | None = None) -> SceneSpec:
    values = _fields("scene", SceneSpec, data)
    placements = []
    for n, item in enumerate(values.get("placements") or []):
        try:
            placements.append(Placement(**_fields(f"scene.placements[{n}]", Placement, item)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scene.placements[{n}]: {exc}") from exc
    values["placements"] = tuple(placements)
    if seed is not None:
        values["seed"] = seed
    try:
        return SceneSpec(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scene: {exc}") from exc


def perturbation_from_dict(data: dict | None, seed: int | None = None) -> PerturbationSpec:
    """``transform`` is ``"random"``, null, or a mapping with ``yaw_deg`` and ``translation``."""
    values = _fields("perturbation", PerturbationSpec, data or {})
    transform = values.pop("transform", None)
    if isinstance(transform, dict):
        try:
            yaw = math.radians(float(transform.get("yaw_deg", 0.0)))
            values["transform"] = Pose4DoF(yaw, tuple(transform.get("translation", (0.0, 0.0, 0.0))))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"perturbation.transform: {exc}") from exc
    elif transform is not None:
        values["transform"] = transform
    if "move_labels" in values:
        values["move_labels"] = frozenset(values["move_labels"] or ())
    if seed is not None:
        values["seed"] = seed
    try:
        return PerturbationSpec(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"perturbation: {exc}") from exc
