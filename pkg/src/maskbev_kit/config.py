"""Toolkit configuration: an INI file with one section per component.

Example::

    [grid]
    x_min = 0
    x_max = 80
    voxel_size = 0.16

    [maskgen]
    min_area_pixels = 40

    [augment]
    drop_fraction = 0.05

    [eval]
    thresholds = 0.5, 0.7
    map_ladder = 0.50:0.05:0.95
    ap_mode = all_point

    [dataset]
    name = kitti
    object_classes = Car
    vehicle_classes = 10

    [encode]
    sampling = first_k

    [run]
    workers = 0

Unspecified keys keep the dataset preset (``kitti`` or ``semantickitti``).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .augmentation import AugmentationConfig
from .dataset_io import CropRegion
from .evaluation import AP_MODES, MAP_LADDER
from .masks import MaskGenParams
from .pillars import DISTANCE_MODES, GridConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = (0.5, 0.7)
    map_ladder: tuple = MAP_LADDER
    ap_mode: str = "all_point"
    miou_mode: str = "tp"
    difficulty_threshold: float = 0.7
    low_area_cutoff: int = 40
    hist_bins: int = 20
    hist_max: float = 1.5
    pred_hist_max: float = 3.0


@dataclass(frozen=True)
class ToolkitConfig:
    dataset: str = "kitti"
    grid: GridConfig = field(default_factory=GridConfig.kitti)
    crop: CropRegion = field(default_factory=CropRegion.kitti)
    sampling: str = "first_k"
    distance: str = "pillar_center"
    maskgen: MaskGenParams = field(default_factory=MaskGenParams)
    vehicle_classes: tuple = (10,)
    object_classes: tuple = ("Car",)
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: dict = field(default_factory=dict)
    workers: int = 0

    @classmethod
    def preset(cls, dataset: str = "kitti") -> "ToolkitConfig":
        if dataset == "kitti":
            return cls()
        if dataset == "semantickitti":
            return cls(dataset=dataset, grid=GridConfig.semantickitti(), crop=CropRegion.semantickitti(),
                       augment=AugmentationConfig.semantickitti())
        raise ConfigError(f"unknown dataset {dataset!r}")

    def semantic_dict(self) -> dict:
        """Every field that can change an output (i.e. not io paths or worker count)."""
        d = dataclasses.asdict(self)
        d.pop("io")
        d.pop("workers")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolved_workers(self, override: int | None = None) -> int:
        n = self.workers if override is None else override
        return n if n > 0 else (os.cpu_count() or 1)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple:
    s = s.strip()
    if s.count(":") == 2:
        start, step, stop = (float(v) for v in s.split(":"))
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(v) for v in s.replace(",", " ").split())


def _coerce(value: str, current):
    if isinstance(current, bool):
        return _parse_bool(value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        if current and isinstance(current[0], str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if current and isinstance(current[0], int):
            return tuple(int(v) for v in value.replace(",", " ").split())
        return _parse_floats(value)
    return value.strip()


def _update(obj, section: configparser.SectionProxy, name: str):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            changes[key] = _coerce(value, known[key])
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    try:
        return dataclasses.replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


_LOOSE_KEYS = {
    "dataset": ("vehicle_classes", "object_classes"),
    "encode": ("sampling", "distance"),
    "run": ("workers",),
}


def load_config(path: str | None = None, dataset: str | None = None) -> ToolkitConfig:
    """Dataset preset overlaid with the INI file at ``path`` (if any)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
    if dataset is None and parser.has_option("dataset", "name"):
        dataset = parser.get("dataset", "name").strip()
    cfg = ToolkitConfig.preset(dataset or "kitti")
    changes = {}
    for section in parser.sections():
        items = dict(parser[section])
        if section in ("grid", "crop", "maskgen", "augment", "eval"):
            changes[section] = _update(getattr(cfg, section), parser[section], section)
        elif section == "io":
            changes["io"] = items
        elif section in _LOOSE_KEYS:
            if section == "dataset":
                items.pop("name", None)
            for key, value in items.items():
                if key not in _LOOSE_KEYS[section]:
                    raise ConfigError(f"[{section}] unknown key {key!r}")
                try:
                    changes[key] = _coerce(value, getattr(cfg, key))
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
        else:
            raise ConfigError(f"unknown section [{section}]")
    cfg = dataclasses.replace(cfg, **changes)
    validate(cfg)
    return cfg


def validate(cfg: ToolkitConfig) -> None:
    if cfg.sampling not in ("first_k", "seeded_random"):
        raise ConfigError(f"unknown sampling {cfg.sampling!r}")
    if cfg.distance not in DISTANCE_MODES:
        raise ConfigError(f"unknown distance mode {cfg.distance!r}")
    if cfg.eval.ap_mode not in AP_MODES:
        raise ConfigError(f"unknown ap_mode {cfg.eval.ap_mode!r}")
    if cfg.eval.miou_mode not in ("tp", "gt"):
        raise ConfigError(f"unknown miou_mode {cfg.eval.miou_mode!r}")
    if not cfg.eval.map_ladder or any(not 0 < t <= 1 for t in (*cfg.eval.thresholds, *cfg.eval.map_ladder)):
        raise ConfigError("IoU thresholds must lie in (0, 1]")
    if cfg.workers < 0:
        raise ConfigError("workers must be >= 0")
