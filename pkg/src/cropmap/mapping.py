"""Probability and binary cropland maps from a trained model, plus rendering.

Thresholding is inclusive (probability >= t counts as crop). Rendering
writes one image pixel per map pixel as 8-bit RGBA PNG; nodata pixels
are transparent.
"""

from __future__ import annotations

import colorsys
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .forest import ForestModel, predict_proba_batch
from .geometry import GeoTransform
from .tilestore import NODATA, ClassMap, EmbeddingTile

# Cropland maps follow the green = crop, yellow = not-crop convention.
BINARY_PALETTE = {1: (0, 128, 0, 255), 0: (255, 255, 0, 255)}


def classify_map(model: ForestModel, tile: EmbeddingTile, workers: int = 1) -> ClassMap:
    """Predict the crop probability of every valid pixel.

    Per-pixel predictions are independent, so chunking across workers
    cannot change the output values.
    """
    if model.dims != tile.dims:
        raise ValueError(f"model dims {model.dims} != tile dims {tile.dims}")
    out = np.full((tile.height, tile.width), np.nan, dtype=np.float64)
    valid = tile.mask
    if valid.any():
        rows, cols = np.nonzero(valid)
        vecs = tile.vectors_at(rows, cols)
        if workers <= 1:
            probs = predict_proba_batch(model, vecs)
        else:
            bounds = np.linspace(0, len(vecs), workers + 1, dtype=int)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(
                    pool.map(
                        lambda i: predict_proba_batch(model, vecs[bounds[i] : bounds[i + 1]]),
                        range(workers),
                    )
                )
            probs = np.concatenate(parts)
        out[valid] = probs
    return ClassMap(geo=tile.geo, values=out, kind="probability")


def threshold_map(pmap: ClassMap, t: float) -> ClassMap:
    """Binary map: 1 where probability >= t (inclusive), 0 below, nodata kept."""
    if pmap.kind != "probability":
        raise ValueError(f"threshold_map needs a probability map, got kind {pmap.kind!r}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    out = np.full(pmap.values.shape, NODATA, dtype=np.uint8)
    valid = pmap.valid_mask()
    out[valid] = (pmap.values[valid] >= t).astype(np.uint8)
    return ClassMap(geo=pmap.geo, values=out, kind="binary")


def default_cluster_palette(n: int) -> dict[int, tuple[int, int, int, int]]:
    """n visually distinct colors for cluster ids 0..n-1 (evenly spaced hues)."""
    if not 1 <= n <= 254:
        raise ValueError("cluster palettes support 1..254 classes")
    palette = {}
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb(i / n, 0.75, 0.95)
        palette[i] = (round(r * 255), round(g * 255), round(b * 255), 255)
    if len(set(palette.values())) != n:
        raise ValueError(f"could not build {n} distinct colors; supply a palette file")
    return palette


def render_array(
    cmap: ClassMap,
    palette: dict[int, tuple] | None = None,
    window: tuple[float, float, float, float] | None = None,
) -> np.ndarray:
    """RGBA array for a map, one image pixel per map pixel in the window.

    window is an optional (min_lon, min_lat, max_lon, max_lat) box; its
    pixel extent is ceil(span / pixel_size) anchored at the floor of the
    minimum corner, clipped to the map. Nodata renders transparent.
    """
    values = cmap.values
    if window is not None:
        sl = _window_slice(cmap.geo, cmap.width, cmap.height, window)
        values = values[sl]
    rgba = np.zeros(values.shape + (4,), dtype=np.uint8)
    if cmap.kind == "probability":
        valid = ~np.isnan(values)
        grey = np.rint(values[valid] * 255).astype(np.uint8)
        rgba[valid] = np.stack([grey, grey, grey, np.full_like(grey, 255)], axis=-1)
        return rgba
    if palette is None:
        if cmap.kind == "binary":
            palette = BINARY_PALETTE
        else:
            top = int(values[values != NODATA].max()) if (values != NODATA).any() else 0
            palette = default_cluster_palette(top + 1)
    present = np.unique(values[values != NODATA])
    missing = [int(v) for v in present if int(v) not in palette]
    if missing:
        raise ValueError(f"palette does not cover map values {missing}")
    for value, color in palette.items():
        color = tuple(color) if len(color) == 4 else tuple(color) + (255,)
        rgba[values == value] = color
    return rgba


def render(
    cmap: ClassMap,
    path,
    palette: dict[int, tuple] | None = None,
    window: tuple[float, float, float, float] | None = None,
) -> None:
    """Render a map to an RGBA PNG file."""
    rgba = render_array(cmap, palette=palette, window=window)
    Image.fromarray(rgba, mode="RGBA").save(Path(path), format="PNG")


def _window_slice(geo: GeoTransform, width: int, height: int, window) -> tuple[slice, slice]:
    min_lon, min_lat, max_lon, max_lat = window
    if not (min_lon < max_lon and min_lat < max_lat):
        raise ValueError("window must be (min_lon, min_lat, max_lon, max_lat) with positive extent")
    col0 = math.floor((min_lon - geo.origin_lon) / geo.pixel_size)
    row0 = math.floor((geo.origin_lat - max_lat) / geo.pixel_size)
    ncols = math.ceil((max_lon - min_lon) / geo.pixel_size)
    nrows = math.ceil((max_lat - min_lat) / geo.pixel_size)
    c0, c1 = max(col0, 0), min(col0 + ncols, width)
    r0, r1 = max(row0, 0), min(row0 + nrows, height)
    if c1 <= c0 or r1 <= r0:
        raise ValueError("window does not intersect the map")
    return slice(r0, r1), slice(c0, c1)


def window_around(lon: float, lat: float, radius: float) -> tuple[float, float, float, float]:
    """Square window of the given radius in degrees centered on a coordinate."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return (lon - radius, lat - radius, lon + radius, lat + radius)


def load_palette(path) -> dict[int, tuple[int, int, int, int]]:
    """Read a palette file of value=R,G,B[,A] lines."""
    palette = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rhs = line.partition("=")
        parts = [p.strip() for p in rhs.split(",")]
        if not key.strip() or len(parts) not in (3, 4):
            raise ValueError(f"{path}:{lineno}: expected value=R,G,B[,A], got {raw!r}")
        channels = tuple(int(p) for p in parts)
        if any(not 0 <= c <= 255 for c in channels):
            raise ValueError(f"{path}:{lineno}: channel out of range in {raw!r}")
        if len(channels) == 3:
            channels = channels + (255,)
        palette[int(key)] = channels
    if not palette:
        raise ValueError(f"{path}: empty palette")
    return palette


def save_palette(palette: dict[int, tuple], path) -> None:
    """Write a palette in the value=R,G,B[,A] text format."""
    lines = []
    for value in sorted(palette):
        channels = ",".join(str(c) for c in palette[value])
        lines.append(f"{value}={channels}")
    Path(path).write_text("\n".join(lines) + "\n")
