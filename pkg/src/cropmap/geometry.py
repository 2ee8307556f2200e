"""Lon/lat pixel grids, ROI polygons, and rasterized masks.

Grids are plain equirectangular lon/lat with a constant pixel size in
degrees, anchored at the top-left corner of pixel (0, 0); latitude
decreases row by row. That is accurate enough at desk scale and keeps
the toolkit free of projection dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GeoTransform:
    """Mapping between pixel indices and lon/lat degrees.

    origin_lon/origin_lat locate the top-left corner of pixel (0, 0);
    pixel_size is degrees per pixel and applies to both axes.
    """

    origin_lon: float
    origin_lat: float
    pixel_size: float

    def __post_init__(self):
        if not (math.isfinite(self.pixel_size) and self.pixel_size > 0):
            raise ValueError(f"pixel_size must be positive and finite, got {self.pixel_size}")
        if not (math.isfinite(self.origin_lon) and math.isfinite(self.origin_lat)):
            raise ValueError("grid origin must be finite")


def lonlat_to_pixel(geo: GeoTransform, lon: float, lat: float) -> tuple[int, int]:
    """Return (col, row) of the pixel containing the point (floor rule).

    Out-of-range indices are legal outputs; callers bound-check.
    """
    col = math.floor((lon - geo.origin_lon) / geo.pixel_size)
    row = math.floor((geo.origin_lat - lat) / geo.pixel_size)
    return col, row


def pixel_to_lonlat(geo: GeoTransform, col: int, row: int) -> tuple[float, float]:
    """Return the lon/lat of the center of pixel (col, row)."""
    lon = geo.origin_lon + (col + 0.5) * geo.pixel_size
    lat = geo.origin_lat - (row + 0.5) * geo.pixel_size
    return lon, lat


class Roi:
    """Polygon region of interest: an outer ring plus optional hole rings.

    Rings are closed lon/lat vertex sequences (the constructor closes
    them if needed). Membership uses the even-odd ray-casting rule, so
    hole rings subtract from the outer ring. Points exactly on an edge
    resolve by the half-open crossing test: consistent, but not
    guaranteed "inside".
    """

    def __init__(self, rings):
        if not rings:
            raise ValueError("Roi needs at least one ring")
        closed = []
        for ring in rings:
            arr = np.asarray(ring, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError("each ring must be a sequence of (lon, lat) pairs")
            if len(arr) < 3:
                raise ValueError("each ring needs at least 3 vertices")
            if not np.array_equal(arr[0], arr[-1]):
                arr = np.vstack([arr, arr[:1]])
            if len(np.unique(arr[:-1], axis=0)) < 3:
                raise ValueError("each ring needs at least 3 distinct vertices")
            closed.append(arr)
        self.rings = closed

    def __repr__(self):
        return f"Roi({len(self.rings)} ring(s), {sum(len(r) - 1 for r in self.rings)} vertices)"


def point_in_roi(roi: Roi, lon: float, lat: float) -> bool:
    """Even-odd ray-casting membership test; holes subtract."""
    inside = False
    for ring in roi.rings:
        for i in range(len(ring) - 1):
            x1, y1 = ring[i]
            x2, y2 = ring[i + 1]
            if y1 == y2:
                continue
            if (y1 > lat) != (y2 > lat):
                xi = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
                if lon < xi:
                    inside = not inside
    return inside


def points_in_roi(roi: Roi, lons, lats) -> np.ndarray:
    """Vectorized point_in_roi over same-shape lon/lat arrays."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    crossings = np.zeros(lons.shape, dtype=np.int64)
    for ring in roi.rings:
        for i in range(len(ring) - 1):
            x1, y1 = ring[i]
            x2, y2 = ring[i + 1]
            if y1 == y2:
                continue
            spans = (y1 > lats) != (y2 > lats)
            if not spans.any():
                continue
            xi = x1 + (lats - y1) * (x2 - x1) / (y2 - y1)
            crossings += spans & (lons < xi)
    return (crossings % 2) == 1


def rasterize_roi(roi: Roi, geo: GeoTransform, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask: True where the pixel center is inside the ROI."""
    if width < 1 or height < 1:
        raise ValueError("raster dimensions must be at least 1x1")
    lons = geo.origin_lon + (np.arange(width) + 0.5) * geo.pixel_size
    lats = geo.origin_lat - (np.arange(height) + 0.5) * geo.pixel_size
    lon_grid, lat_grid = np.meshgrid(lons, lats)
    return points_in_roi(roi, lon_grid, lat_grid)


def load_roi(path) -> Roi:
    """Read an ROI file: one "lon,lat" pair per line, rings separated by blank lines."""
    rings: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            if current:
                rings.append(current)
                current = []
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'lon,lat', got {raw!r}")
        current.append((float(parts[0]), float(parts[1])))
    if current:
        rings.append(current)
    if not rings:
        raise ValueError(f"no rings found in ROI file {path}")
    return Roi(rings)


def save_roi(roi: Roi, path) -> None:
    """Write an ROI in the plain-text ring format read by load_roi."""
    blocks = []
    for ring in roi.rings:
        blocks.append("\n".join(f"{lon!r},{lat!r}" for lon, lat in ring))
    Path(path).write_text("\n\n".join(blocks) + "\n")
