"""Pipeline configuration: one flat YAML mapping with module-prefixed keys.

Example::

    zones.bandwidth: 80.0
    assoc.delta: 0.5

Unknown keys are rejected; absent keys keep their defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .assoc import AssociationConstraints
from .clm import CLMParams
from .core import ConfigError
from .tsct import RelinkParams
from .zones import MeanShiftParams, ZoneThresholds


@dataclass(frozen=True)
class ReidParams:
    clip_length: int = 4
    attention: str = "softmax"
    normalize: bool = True
    margin: float = 0.3
    lambda1: float = 1.0
    lambda2: float = 1.0
    xent_average: str = "classes"

    def __post_init__(self):
        if self.clip_length < 1:
            raise ConfigError("reid.clip_length must be at least 1")
        if self.attention not in ("softmax", "raw"):
            raise ConfigError("reid.attention must be 'softmax' or 'raw'")
        if self.xent_average not in ("classes", "sample"):
            raise ConfigError("reid.xent_average must be 'classes' or 'sample'")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.margin < 0:
            raise ConfigError("reid loss weights and margin must be non-negative")


@dataclass(frozen=True)
class PipelineOptions:
    tsct: bool = True
    use_clm: bool = True
    frame_rate: float = 10.0
    iou_threshold: float = 0.5

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ConfigError("pipeline.frame_rate must be positive")
        if not 0 < self.iou_threshold <= 1:
            raise ConfigError("pipeline.iou_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    meanshift: MeanShiftParams = field(default_factory=MeanShiftParams)
    zones: ZoneThresholds = field(default_factory=ZoneThresholds)
    tsct: RelinkParams = field(default_factory=RelinkParams)
    clm: CLMParams = field(default_factory=CLMParams)
    assoc: AssociationConstraints = field(default_factory=AssociationConstraints)
    reid: ReidParams = field(default_factory=ReidParams)
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)

    def with_values(self, values: dict[str, Any]) -> "PipelineConfig":
        """Return a copy with flat "section.key" overrides applied."""
        grouped: dict[str, dict[str, Any]] = {}
        for key, v in values.items():
            section, _, name = key.partition(".")
            if not name or section not in _SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            if name not in {f.name for f in fields(_SECTIONS[section])}:
                raise ConfigError(f"unknown config key {key!r}")
            grouped.setdefault(section, {})[name] = v
        kw = {}
        for section, cls in _SECTIONS.items():
            current = getattr(self, section)
            merged = {f.name: getattr(current, f.name) for f in fields(cls)}
            overrides = grouped.get(section, {})
            if section == "meanshift" and "bandwidth" in overrides and "merge_radius" not in overrides:
                merged["merge_radius"] = None  # re-derive from the new bandwidth
            merged.update(overrides)
            try:
                kw[section] = cls(**merged)
            except TypeError as e:
                raise ConfigError(f"bad value in section {section!r}: {e}") from None
        return PipelineConfig(**kw)

    def flat(self) -> dict[str, Any]:
        return {f"{s}.{f.name}": getattr(getattr(self, s), f.name)
                for s, cls in _SECTIONS.items() for f in fields(cls)}


_SECTIONS = {
    "meanshift": MeanShiftParams,
    "zones": ZoneThresholds,
    "tsct": RelinkParams,
    "clm": CLMParams,
    "assoc": AssociationConstraints,
    "reid": ReidParams,
    "pipeline": PipelineOptions,
}

_COMMENTS = {
    "meanshift.bandwidth": "flat-kernel radius, pixels",
    "meanshift.convergence_tol": "stop when a mode moves less than this, pixels",
    "meanshift.max_iters": "iteration cap per seed",
    "meanshift.merge_radius": "modes closer than this are merged, pixels",
    "zones.rho_ta": "traffic-aware density threshold",
    "zones.rho_e": "entry density threshold",
    "zones.rho_x": "exit density threshold",
    "tsct.sim_threshold": "max feature distance for a re-link (unit-normalised features)",
    "tsct.max_gap": "max frames between a break and its resumption",
    "tsct.use_order_prior": "break near-ties (5%) by queue order",
    "tsct.clip_length": "frames averaged at each tracklet end",
    "clm.min_alpha": "peak overlap ratio for a zone to count as traversed",
    "clm.pad_fraction": "window pad as a fraction of the observed span",
    "clm.min_pad": "minimum window pad, frames",
    "clm.allow_traffic_aware_pairs": "let traffic-aware zones start or end zone pairs",
    "assoc.delta": "merge threshold on feature distance",
    "assoc.iterations": "passes over the sorted candidate list",
    "assoc.enforce_order": "reject pairs that overtake previously matched ones",
    "reid.clip_length": "frames per clip",
    "reid.attention": "softmax or raw clip weighting",
    "reid.normalize": "L2-normalise trajectory features",
    "reid.margin": "triplet margin",
    "reid.lambda1": "triplet loss weight",
    "reid.lambda2": "cross-entropy loss weight",
    "reid.xent_average": "classes (divide by identity count) or sample",
    "pipeline.tsct": "run traffic-aware re-linking",
    "pipeline.use_clm": "restrict candidates with the camera link model",
    "pipeline.frame_rate": "frames per second",
    "pipeline.iou_threshold": "IOU needed for a box match in evaluation",
}


def load_config(path: Optional[str | Path]) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    if data is None:
        return cfg
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat key/value mapping")
    return cfg.with_values(data)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for key, value in cfg.flat().items():
        lines.append(f"{key}: {yaml.safe_dump(value).splitlines()[0]}  # {_COMMENTS.get(key, '')}".rstrip(" #"))
    return "\n".join(lines) + "\n"
