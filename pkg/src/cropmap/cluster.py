"""K-means clustering of embeddings for qualitative map verification.

Lloyd's algorithm with k-means++ seeding and squared Euclidean
distances. Empty clusters are repaired by reseeding to the point
farthest from its centroid, keeping k fixed. Inertia is checked to be
non-increasing on every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tilestore import NODATA, ClassMap, EmbeddingTile

# Tolerance for the per-iteration inertia monotonicity assertion; floating
# reductions can wiggle at machine precision on plateaus.
_MONOTONE_RTOL = 1e-9

_ASSIGN_CHUNK = 16384  # pixels per distance-matrix block when labeling maps


@dataclass
class KMeansModel:
    """Fitted centroids plus fit diagnostics."""

    centroids: np.ndarray
    iterations_run: int
    inertia: float
    seed: int
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or len(self.centroids) < 1:
            raise ValueError("centroids must be a nonempty (k, dims) array")
        if not np.isfinite(self.centroids).all():
            raise ValueError("centroids must be finite")
        if self.inertia < 0:
            raise ValueError("inertia must be non-negative")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dims(self) -> int:
        return self.centroids.shape[1]


def _pairwise_sq(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # Elementwise (x - c)^2 rather than the expanded dot-product form:
    # marginally slower but keeps genuinely equidistant points at exactly
    # equal distances, which the tie-break rule depends on.
    return ((X[:, np.newaxis, :] - C[np.newaxis, :, :]) ** 2).sum(axis=2)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.integers(n)]
    closest = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
            pick = rng.choice(n, p=probs)
        else:  # all points coincide with chosen centroids (k <= distinct rules this out)
            pick = rng.integers(n)
        centroids[j] = X[pick]
        closest = np.minimum(closest, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def fit_kmeans(samples, k: int, seed: int, max_iter: int = 500) -> KMeansModel:
    """Run Lloyd's algorithm until assignments are stable or max_iter.

    Deterministic given (sample order, k, seed). Raises if k exceeds the
    number of distinct samples.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("samples must be a nonempty (n, dims) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    distinct = np.unique(X, axis=0).shape[0]
    if k > distinct:
        raise ValueError(f"k={k} exceeds the {distinct} distinct samples")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(X, k, rng)
    history: list[float] = []
    assignments = None
    iterations = 0
    for _ in range(max_iter):
        d2 = _pairwise_sq(X, centroids)
        new_assign = d2.argmin(axis=1)  # ties resolve to the lowest index
        point_d2 = d2[np.arange(len(X)), new_assign]
        inertia = float(point_d2.sum())
        if history:
            assert inertia <= history[-1] * (1 + _MONOTONE_RTOL) + 1e-12, (
                f"inertia increased: {history[-1]} -> {inertia}"
            )
        history.append(inertia)
        if assignments is not None and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        iterations += 1
        for c in range(k):
            members = assignments == c
            if members.any():
                centroids[c] = X[members].mean(axis=0)
        for c in range(k):  # repair empties: reseed to the farthest point
            if not (assignments == c).any():
                far = int(point_d2.argmax())
                centroids[c] = X[far]
                point_d2[far] = 0.0
    return KMeansModel(
        centroids=centroids,
        iterations_run=iterations,
        inertia=history[-1],
        seed=seed,
        inertia_history=history,
    )


def assign(model: KMeansModel, v) -> int:
    """Index of the nearest centroid (squared Euclidean, ties to lowest index)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.dims,):
        raise ValueError(f"expected a vector of length {model.dims}, got shape {v.shape}")
    return int(((model.centroids - v) ** 2).sum(axis=1).argmin())


def assign_many(model: KMeansModel, X) -> np.ndarray:
    """Nearest-centroid labels for an (n, dims) array, chunked for memory."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dims:
        raise ValueError(f"expected an (n, {model.dims}) array, got shape {X.shape}")
    out = np.empty(len(X), dtype=np.int64)
    for start in range(0, len(X), _ASSIGN_CHUNK):
        block = X[start : start + _ASSIGN_CHUNK]
        out[start : start + _ASSIGN_CHUNK] = _pairwise_sq(block, model.centroids).argmin(axis=1)
    return out


def cluster_map(model: KMeansModel, tile: EmbeddingTile) -> ClassMap:
    """Assign every valid pixel of the tile to its nearest centroid."""
    if model.dims != tile.dims:
        raise ValueError(f"model dims {model.dims} != tile dims {tile.dims}")
    if model.k > NODATA:
        raise ValueError(f"at most {NODATA} clusters supported ({NODATA} is the nodata sentinel)")
    out = np.full((tile.height, tile.width), NODATA, dtype=np.uint8)
    valid = tile.mask
    if valid.any():
        rows, cols = np.nonzero(valid)
        out[valid] = assign_many(model, tile.vectors_at(rows, cols)).astype(np.uint8)
    return ClassMap(geo=tile.geo, values=out, kind="cluster")


def save_kmeans(model: KMeansModel, path) -> None:
    """Plain-text model file: header lines, then one centroid per row."""
    lines = [
        f"k {model.k}",
        f"dims {model.dims}",
        f"seed {model.seed}",
        f"inertia {model.inertia!r}",
        f"iterations {model.iterations_run}",
    ]
    for c in model.centroids:
        lines.append(" ".join(repr(x) for x in c))
    Path(path).write_text("\n".join(lines) + "\n")


def load_kmeans(path) -> KMeansModel:
    """Read a model written by save_kmeans."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 5:
        raise ValueError(f"{path}: not a k-means model file")
    header = {}
    for line in lines[:5]:
        key, _, value = line.partition(" ")
        header[key] = value
    try:
        k = int(header["k"])
        dims = int(header["dims"])
        seed = int(header["seed"])
        inertia = float(header["inertia"])
        iterations = int(header["iterations"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed k-means header") from exc
    if len(lines) != 5 + k:
        raise ValueError(f"{path}: expected {k} centroid rows, found {len(lines) - 5}")
    centroids = np.array([[float(x) for x in line.split()] for line in lines[5:]])
    if centroids.shape != (k, dims):
        raise ValueError(f"{path}: centroid rows do not match header k/dims")
    return KMeansModel(
        centroids=centroids,
        iterations_run=iterations,
        inertia=inertia,
        seed=seed,
        inertia_history=[inertia],
    )
