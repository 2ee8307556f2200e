"""Accuracy assessment against labeled points and map-to-map agreement.

Crop is the positive class throughout. Undefined metrics (division by
zero) are reported as None, never as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import lonlat_to_pixel
from .tilestore import NODATA, ClassMap


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts with crop as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    """Overall, user's, and producer's accuracy plus F1; None when undefined."""

    oa: float
    ua: float | None
    pa: float | None
    f1: float | None


@dataclass
class AgreementReport:
    """Pixelwise comparison of two binary maps over jointly valid pixels."""

    crop_fraction_a: float
    crop_fraction_b: float
    agreement: float
    crosstab: np.ndarray  # crosstab[i, j] = count of (a == i) & (b == j)
    n_joint: int


def f1_from_ua_pa(ua: float, pa: float) -> float:
    """Harmonic mean of user's and producer's accuracy."""
    if ua + pa == 0:
        raise ValueError("F1 is undefined when UA and PA are both zero")
    return 2.0 * ua * pa / (ua + pa)


def build_confusion(cmap: ClassMap, pts) -> tuple[ConfusionMatrix, int]:
    """Tally a binary map against labeled points by nearest-pixel lookup.

    Points outside the map or on nodata are dropped; the drop count is
    returned alongside the matrix. Raises when no point is usable.
    """
    if cmap.kind != "binary":
        raise ValueError(f"build_confusion needs a binary map, got kind {cmap.kind!r}")
    pts = list(pts)
    if not pts:
        raise ValueError("no points given")
    tp = fp = fn = tn = 0
    dropped = 0
    for p in pts:
        col, row = lonlat_to_pixel(cmap.geo, p.lon, p.lat)
        if not (0 <= col < cmap.width and 0 <= row < cmap.height):
            dropped += 1
            continue
        predicted = int(cmap.values[row, col])
        if predicted == NODATA:
            dropped += 1
            continue
        if predicted == 1 and p.is_crop == 1:
            tp += 1
        elif predicted == 1 and p.is_crop == 0:
            fp += 1
        elif predicted == 0 and p.is_crop == 1:
            fn += 1
        else:
            tn += 1
    if tp + fp + fn + tn == 0:
        raise ValueError("no usable points: all fell outside the map or on nodata")
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn), dropped


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """OA, UA (precision), PA (recall), and F1 for the crop class."""
    if cm.total < 1:
        raise ValueError("metrics need at least one assessed point")
    oa = (cm.tp + cm.tn) / cm.total
    ua = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    pa = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    if ua is None or pa is None or ua + pa == 0:
        f1 = None
    else:
        f1 = f1_from_ua_pa(ua, pa)
    return MetricsReport(oa=oa, ua=ua, pa=pa, f1=f1)


def compare_maps(a: ClassMap, b: ClassMap) -> AgreementReport:
    """Crop fractions, agreement rate, and 2x2 cross-tab of two binary maps."""
    for m, name in ((a, "first"), (b, "second")):
        if m.kind != "binary":
            raise ValueError(f"compare_maps needs binary maps; {name} map has kind {m.kind!r}")
    if a.values.shape != b.values.shape or a.geo != b.geo:
        raise ValueError("maps must share the same grid and geo transform")
    joint = a.valid_mask() & b.valid_mask()
    n = int(joint.sum())
    if n == 0:
        raise ValueError("maps share no jointly valid pixels")
    av = a.values[joint].astype(np.int64)
    bv = b.values[joint].astype(np.int64)
    crosstab = np.zeros((2, 2), dtype=np.int64)
    for i in (0, 1):
        for j in (0, 1):
            crosstab[i, j] = int(((av == i) & (bv == j)).sum())
    return AgreementReport(
        crop_fraction_a=float(av.mean()),
        crop_fraction_b=float(bv.mean()),
        agreement=float((av == bv).mean()),
        crosstab=crosstab,
        n_joint=n,
    )


def _fmt(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.6f}"


def metrics_text(report: MetricsReport, cm: ConfusionMatrix | None = None, dropped: int | None = None) -> str:
    """Aligned plain-text metrics report."""
    lines = [
        f"overall accuracy     {_fmt(report.oa)}",
        f"user's accuracy      {_fmt(report.ua)}",
        f"producer's accuracy  {_fmt(report.pa)}",
        f"f1 score             {_fmt(report.f1)}",
    ]
    if cm is not None:
        lines.append(f"counts tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn} total={cm.total}")
    if dropped is not None:
        lines.append(f"dropped points       {dropped}")
    return "\n".join(lines) + "\n"


def metrics_csv(report: MetricsReport) -> str:
    """metric,value rows; undefined metrics spelled out, never zero."""
    rows = ["metric,value"]
    for name, value in (("oa", report.oa), ("ua", report.ua), ("pa", report.pa), ("f1", report.f1)):
        rows.append(f"{name},{'undefined' if value is None else repr(value)}")
    return "\n".join(rows) + "\n"


def crosstab_csv(report: AgreementReport) -> str:
    """2x2 cross-tab as CSV: rows are map A values, columns map B values."""
    rows = [",b=0,b=1"]
    for i in (0, 1):
        rows.append(f"a={i},{report.crosstab[i, 0]},{report.crosstab[i, 1]}")
    return "\n".join(rows) + "\n"


def agreement_text(report: AgreementReport) -> str:
    """Aligned plain-text agreement report."""
    return (
        f"jointly valid pixels {report.n_joint}\n"
        f"crop fraction (a)    {report.crop_fraction_a:.6f}\n"
        f"crop fraction (b)    {report.crop_fraction_b:.6f}\n"
        f"agreement            {report.agreement:.6f}\n"
    )
