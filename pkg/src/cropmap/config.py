"""Pipeline configuration: a flat key-value text file with one section per stage.

Every workflow constant is a named, overridable key with a default:
7 clusters trained on 1000 sampled embeddings, 100 trees, probability
threshold 0.7, and a 10 m (9e-5 degree) pixel grid. Scene classes are
[class.NAME] sections; mean/stddev accept either a single value
(broadcast over all dims) or a comma list of length dims.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forest import ForestParams
from .geometry import GeoTransform
from .synth import PIXEL_SIZE_10M, ClassSpec, SceneSpec

DEFAULTS = {
    "scene.pixel_size": PIXEL_SIZE_10M,  # 10 m grid
    "scene.origin_lon": 0.0,
    "scene.origin_lat": 10.0,
    "scene.patch_size": 16,
    "scene.seed": 42,
    "labels.n_points": 1500,
    "labels.train_fraction": 0.8,
    "labels.seed": 7,
    "cluster.k": 7,
    "cluster.samples": 1000,
    "cluster.seed": 11,
    "cluster.max_iter": 500,
    "train.trees": 100,
    "train.seed": 13,
    "train.min_leaf": 1,
    "train.max_depth": 0,  # 0 = unlimited
    "train.features_per_split": 0,  # 0 = ceil(sqrt(dims))
    "train.bootstrap": True,
    "map.threshold": 0.7,
}

_CLASS_PREFIX = "class."


@dataclass(frozen=True)
class PipelineConfig:
    """Parsed stage parameters for one end-to-end run."""

    scene: SceneSpec
    crop_classes: tuple[int, ...]
    n_points: int
    train_fraction: float
    labels_seed: int
    cluster_k: int
    cluster_samples: int
    cluster_seed: int
    cluster_max_iter: int
    n_trees: int
    train_seed: int
    forest_params: ForestParams
    threshold: float


class ConfigError(ValueError):
    """A config file is missing required keys or holds malformed values."""


def _vector(text: str, dims: int, what: str) -> np.ndarray:
    parts = [p for p in text.split(",") if p.strip()]
    values = [float(p) for p in parts]
    if len(values) == 1:
        return np.full(dims, values[0])
    if len(values) != dims:
        raise ConfigError(f"{what}: expected 1 or {dims} values, got {len(values)}")
    return np.array(values)


def _read(cfg: configparser.ConfigParser, section: str, key: str, cast):
    dotted = f"{section}.{key}"
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
    if dotted in DEFAULTS:
        return DEFAULTS[dotted]
    raise ConfigError(f"missing required key [{section}] {key}")


def load_config(path) -> PipelineConfig:
    """Parse a pipeline config file, applying the documented defaults."""
    path = Path(path)
    cfg = configparser.ConfigParser(interpolation=None)
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if not cfg.has_section("scene"):
        raise ConfigError("config needs a [scene] section")

    dims = _read(cfg, "scene", "dims", int)
    class_names = [s[len(_CLASS_PREFIX):] for s in cfg.sections() if s.startswith(_CLASS_PREFIX)]
    if not class_names:
        raise ConfigError("config needs at least one [class.NAME] section")
    classes = []
    for name in class_names:
        section = _CLASS_PREFIX + name
        if not cfg.has_option(section, "prior"):
            raise ConfigError(f"[{section}] needs a prior")
        classes.append(
            ClassSpec(
                name=name,
                prior=cfg.getfloat(section, "prior"),
                mean=_vector(cfg.get(section, "mean", fallback="0"), dims, f"[{section}] mean"),
                stddev=_vector(cfg.get(section, "stddev", fallback="1"), dims, f"[{section}] stddev"),
            )
        )

    geo = GeoTransform(
        origin_lon=_read(cfg, "scene", "origin_lon", float),
        origin_lat=_read(cfg, "scene", "origin_lat", float),
        pixel_size=_read(cfg, "scene", "pixel_size", float),
    )
    scene = SceneSpec(
        width=_read(cfg, "scene", "width", int),
        height=_read(cfg, "scene", "height", int),
        dims=dims,
        classes=tuple(classes),
        patch_size=_read(cfg, "scene", "patch_size", int),
        seed=_read(cfg, "scene", "seed", int),
        geo=geo,
    )

    crop_raw = cfg.get("labels", "crop_classes", fallback=None)
    if crop_raw is None:
        raise ConfigError("missing required key [labels] crop_classes")
    crop_classes = []
    for token in crop_raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token.isdigit():
            crop_classes.append(int(token))
        else:
            crop_classes.append(scene.class_index(token))
    if not crop_classes:
        raise ConfigError("[labels] crop_classes is empty")

    max_depth = _read(cfg, "train", "max_depth", int)
    mtry = _read(cfg, "train", "features_per_split", int)
    forest_params = ForestParams(
        features_per_split=None if mtry == 0 else mtry,
        min_leaf=_read(cfg, "train", "min_leaf", int),
        max_depth=None if max_depth == 0 else max_depth,
        bootstrap=_read(cfg, "train", "bootstrap", bool),
    )

    return PipelineConfig(
        scene=scene,
        crop_classes=tuple(crop_classes),
        n_points=_read(cfg, "labels", "n_points", int),
        train_fraction=_read(cfg, "labels", "train_fraction", float),
        labels_seed=_read(cfg, "labels", "seed", int),
        cluster_k=_read(cfg, "cluster", "k", int),
        cluster_samples=_read(cfg, "cluster", "samples", int),
        cluster_seed=_read(cfg, "cluster", "seed", int),
        cluster_max_iter=_read(cfg, "cluster", "max_iter", int),
        n_trees=_read(cfg, "train", "trees", int),
        train_seed=_read(cfg, "train", "seed", int),
        forest_params=forest_params,
        threshold=_read(cfg, "map", "threshold", float),
    )


def config_sections(path) -> dict[str, dict[str, str]]:
    """Raw section/key/value view of a config file, for run manifests."""
    cfg = configparser.ConfigParser(interpolation=None)
    if not cfg.read(Path(path)):
        raise ConfigError(f"config file not found: {path}")
    return {section: dict(cfg.items(section)) for section in cfg.sections()}


def config_sha256(path) -> str:
    """Hex digest of the config file bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
