"""Synthetic embedding scenes with known per-pixel land-cover classes.

Stands in for cloud inference so the whole pipeline can run at desk
scale: square patches are assigned classes by prior weight, and each
pixel draws its vector from its class's diagonal Gaussian. Every draw
comes from a counter-based Philox stream keyed by (seed, row), so
generation is reproducible and independent of how rows are scheduled
across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import GeoTransform, Roi, rasterize_roi, pixel_to_lonlat
from .points import LabeledPoint
from .tilestore import NODATA, ClassMap, EmbeddingTile, QuantizationParams

# 10 m expressed in degrees at the equator, the default grid scale.
PIXEL_SIZE_10M = 9e-5

DEFAULT_GEO = GeoTransform(origin_lon=0.0, origin_lat=10.0, pixel_size=PIXEL_SIZE_10M)

_MASK64 = (1 << 64) - 1
_STREAM_PATCHES = 0
_STREAM_ROWS = 1


@dataclass(frozen=True)
class ClassSpec:
    """One land-cover class: prior weight and a diagonal Gaussian in embedding space."""

    name: str
    prior: float
    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "stddev", np.asarray(self.stddev, dtype=np.float64))
        if self.prior <= 0:
            raise ValueError(f"class {self.name!r}: prior must be positive")
        if self.mean.ndim != 1 or self.mean.shape != self.stddev.shape:
            raise ValueError(f"class {self.name!r}: mean and stddev must be equal-length vectors")
        if (self.stddev < 0).any():
            raise ValueError(f"class {self.name!r}: stddev must be non-negative")


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines a synthetic scene, including the seed."""

    width: int
    height: int
    dims: int
    classes: tuple[ClassSpec, ...]
    patch_size: int
    seed: int
    geo: GeoTransform = DEFAULT_GEO

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be at least 1x1")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not self.classes:
            raise ValueError("at least one class is required")
        if len(self.classes) > 254:
            raise ValueError("at most 254 classes are supported (255 is the nodata sentinel)")
        total = sum(c.prior for c in self.classes)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"class priors must sum to 1, got {total}")
        for c in self.classes:
            if len(c.mean) != self.dims:
                raise ValueError(f"class {c.name!r}: mean length {len(c.mean)} != dims {self.dims}")

    def class_index(self, name: str) -> int:
        for i, c in enumerate(self.classes):
            if c.name == name:
                return i
        raise KeyError(f"no class named {name!r}")


def _stream(seed: int, stream: int, index: int) -> np.random.Generator:
    # Philox is counter-based: a distinct 128-bit key per (seed, stream,
    # index) gives independent streams with no shared state.
    key = ((seed & _MASK64) << 64) | (stream << 48) | index
    return np.random.Generator(np.random.Philox(key=key))


def generate_scene(
    spec: SceneSpec,
    roi: Roi | None = None,
    quant: QuantizationParams | None = None,
    workers: int = 1,
) -> tuple[EmbeddingTile, ClassMap]:
    """Generate an embedding tile and its exact ground-truth class map.

    Classes are assigned per patch by sampling the priors; pixels draw
    from their class Gaussian. Output is fully determined by the spec
    seed and identical for any worker count. When an ROI is given the
    tile mask is clipped to it and ground truth is nodata outside.
    quant overrides the default per-scene u16 min/max fit.
    """
    n_classes = len(spec.classes)
    priors = np.array([c.prior for c in spec.classes], dtype=np.float64)
    priors = priors / priors.sum()  # exact normalization for choice()
    means = np.stack([c.mean for c in spec.classes])
    stddevs = np.stack([c.stddev for c in spec.classes])

    patches_down = -(-spec.height // spec.patch_size)
    patches_across = -(-spec.width // spec.patch_size)
    patch_rng = _stream(spec.seed, _STREAM_PATCHES, 0)
    patch_classes = patch_rng.choice(n_classes, size=(patches_down, patches_across), p=priors)
    class_grid = np.repeat(np.repeat(patch_classes, spec.patch_size, axis=0), spec.patch_size, axis=1)
    class_grid = class_grid[: spec.height, : spec.width]

    values = np.empty((spec.height, spec.width, spec.dims), dtype=np.float64)

    def fill_row(r: int) -> None:
        rng = _stream(spec.seed, _STREAM_ROWS, r)
        row_classes = class_grid[r]
        noise = rng.standard_normal((spec.width, spec.dims))
        values[r] = means[row_classes] + stddevs[row_classes] * noise

    if workers <= 1:
        for r in range(spec.height):
            fill_row(r)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(spec.height)))

    mask = rasterize_roi(roi, spec.geo, spec.width, spec.height) if roi is not None else None
    tile = EmbeddingTile.from_real(values, spec.geo, quant=quant, mask=mask)

    gt_values = class_grid.astype(np.uint8)
    gt_values[~tile.mask] = NODATA
    ground_truth = ClassMap(geo=spec.geo, values=gt_values, kind="cluster")
    return tile, ground_truth


def sample_labels(
    ground_truth: ClassMap,
    crop_classes,
    n: int,
    train_fraction: float,
    seed: int,
) -> list[LabeledPoint]:
    """Draw n distinct valid pixels as labeled points with a train/test split.

    is_crop is 1 iff the ground-truth class is in crop_classes. After a
    seeded shuffle, the first ceil(n * train_fraction) points become
    "training" and the rest "testing". Point coordinates are pixel
    centers, so they sample back to the same pixel.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    crop = {int(c) for c in crop_classes}
    valid = np.flatnonzero(ground_truth.valid_mask().ravel())
    if n > len(valid):
        raise ValueError(f"requested {n} points but only {len(valid)} valid pixels exist")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(valid, size=n, replace=False)
    rng.shuffle(chosen)
    n_train = math.ceil(n * train_fraction)
    rows, cols = np.unravel_index(chosen, ground_truth.values.shape)
    classes = ground_truth.values[rows, cols]
    out = []
    for i in range(n):
        lon, lat = pixel_to_lonlat(ground_truth.geo, int(cols[i]), int(rows[i]))
        out.append(
            LabeledPoint(
                lon=lon,
                lat=lat,
                is_crop=int(int(classes[i]) in crop),
                subset="training" if i < n_train else "testing",
            )
        )
    return out
