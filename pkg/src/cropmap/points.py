"""Labeled ground-reference points and their CSV interchange format."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

SUBSETS = ("training", "testing")
CSV_HEADER = ["lon", "lat", "is_crop", "subset"]


@dataclass(frozen=True)
class LabeledPoint:
    """One ground-reference point: location, crop/non-crop label, and split."""

    lon: float
    lat: float
    is_crop: int
    subset: str

    def __post_init__(self):
        if self.is_crop not in (0, 1):
            raise ValueError(f"is_crop must be 0 or 1, got {self.is_crop}")
        if self.subset not in SUBSETS:
            raise ValueError(f"subset must be one of {SUBSETS}, got {self.subset!r}")


def filter_subset(points, subset: str) -> list[LabeledPoint]:
    """Points belonging to one split ("training" or "testing")."""
    if subset not in SUBSETS:
        raise ValueError(f"subset must be one of {SUBSETS}, got {subset!r}")
    return [p for p in points if p.subset == subset]


def save_points(points, path) -> None:
    """Write points as CSV with header lon,lat,is_crop,subset.

    Coordinates use repr floats so a load/save cycle is lossless.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for p in points:
            writer.writerow([repr(p.lon), repr(p.lat), p.is_crop, p.subset])


def load_points(path) -> list[LabeledPoint]:
    """Read a lon,lat,is_crop,subset CSV written by save_points (or by hand)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        points = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            points.append(
                LabeledPoint(float(row[0]), float(row[1]), int(row[2]), row[3].strip())
            )
    return points
