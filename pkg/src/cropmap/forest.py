"""Random-forest crop/non-crop classifier with probability output.

Trees are greedy CART stumps-to-full-trees minimizing Gini impurity.
Candidate thresholds are midpoints between consecutive sorted distinct
feature values; ties in impurity break toward the lowest feature index,
then the lowest threshold, so training is fully deterministic given
(training set, seed, hyperparameters). The forest probability for a
vector is the mean over trees of each leaf's positive-class fraction,
which reduces to the fraction of trees voting crop when leaves are pure.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)

_MODEL_MAGIC = b"CMRF"
_MODEL_VERSION = 1
# header: magic, version, n_trees, dims, features_per_split, min_leaf,
# max_depth (-1 = unlimited), bootstrap flag, seed
_MODEL_HEADER = struct.Struct("<4sHIIIIiBQ")

# RNG stream tags so out-of-bag reconstruction can redraw the bootstrap
# without replaying tree-growth draws.
_STREAM_BOOTSTRAP = 0
_STREAM_GROW = 1


@dataclass
class TrainingSet:
    """Feature rows paired with binary labels (1 = crop)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError("features must be a nonempty (n, dims) array")
        if self.labels.shape != (len(self.features),):
            raise ValueError("labels must align with feature rows")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.labels = self.labels.astype(np.int64)

    @property
    def dims(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class ForestParams:
    """Training hyperparameters. Defaults follow the common Breiman choices:
    sqrt(D) features per split, nodes grown to purity, bootstrap on."""

    features_per_split: int | None = None  # None = ceil(sqrt(dims))
    min_leaf: int = 1
    max_depth: int | None = None  # None = unlimited
    bootstrap: bool = True

    def __post_init__(self):
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolve_mtry(self, dims: int) -> int:
        if self.features_per_split is None:
            return min(dims, math.ceil(math.sqrt(dims)))
        if self.features_per_split > dims:
            raise ValueError(
                f"features_per_split={self.features_per_split} exceeds dims={dims}"
            )
        return self.features_per_split


class DecisionTree:
    """One CART tree stored as parallel node arrays.

    feature[i] < 0 marks a leaf; internal nodes carry (feature, threshold)
    and child indices. Every node stores its training label counts;
    predictions read them from leaves.
    """

    __slots__ = ("feature", "threshold", "left", "right", "count0", "count1")

    def __init__(self, feature, threshold, left, right, count0, count1):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.count0 = np.asarray(count0, dtype=np.int64)
        self.count1 = np.asarray(count1, dtype=np.int64)
        n = len(self.feature)
        if not all(len(a) == n for a in (self.threshold, self.left, self.right, self.count0, self.count1)):
            raise ValueError("tree node arrays must share one length")
        if n == 0:
            raise ValueError("tree must have at least one node")

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index reached by each row of X."""
        idx = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[idx]
            internal = feat >= 0
            if not internal.any():
                return idx
            rows = np.flatnonzero(internal)
            at = idx[rows]
            go_left = X[rows, feat[rows]] <= self.threshold[at]
            idx[rows] = np.where(go_left, self.left[at], self.right[at])

    def proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class fraction of the leaf each row lands in."""
        leaves = self.leaf_ids(X)
        c0 = self.count0[leaves].astype(np.float64)
        c1 = self.count1[leaves].astype(np.float64)
        return c1 / (c0 + c1)


@dataclass
class ForestModel:
    """Trained ensemble plus everything needed to reproduce it."""

    trees: list[DecisionTree]
    dims: int
    seed: int
    params: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ValueError("a forest needs at least one tree")

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _tree_rng(seed: int, tree_index: int, stream: int) -> np.random.Generator:
    # Keyed by (seed, tree index, stream): tree training is independent of
    # scheduling, and the bootstrap draw can be replayed in isolation.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tree_index, stream))
    return np.random.default_rng(ss)


def _bootstrap_indices(seed: int, tree_index: int, n: int) -> np.ndarray:
    return _tree_rng(seed, tree_index, _STREAM_BOOTSTRAP).integers(0, n, size=n)


def _best_split(X, y, rows, feats, min_leaf):
    """Best (feature, threshold) over candidate features, or None.

    Score maximized is sum((c0^2 + c1^2) / n) over both sides, which
    orders splits identically to minimizing weighted Gini but stays in
    exact integer-derived arithmetic until the final divisions.
    """
    n = len(rows)
    ysub = y[rows]
    best_score = -np.inf
    best = None
    for f in feats:
        vals = X[rows, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = ysub[order]
        change = sv[1:] != sv[:-1]
        if not change.any():
            continue
        pos = np.flatnonzero(change) + 1  # left side sizes
        thr = (sv[pos - 1] + sv[pos]) / 2.0
        # Guard against midpoints that round up onto the right value,
        # which would leave the right side empty under the <= rule.
        valid = thr < sv[pos]
        n_left = pos
        n_right = n - pos
        if min_leaf > 1:
            valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        cum1 = np.cumsum(sy)
        c1_left = cum1[pos - 1]
        c0_left = n_left - c1_left
        c1_right = cum1[-1] - c1_left
        c0_right = n_right - c1_right
        score = (c0_left * c0_left + c1_left * c1_left) / n_left + (
            c0_right * c0_right + c1_right * c1_right
        ) / n_right
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))  # first max = lowest threshold on ties
        if score[i] > best_score:  # strict: lowest feature index wins ties
            best_score = score[i]
            best = (int(f), float(thr[i]))
    return best


def _grow_tree(X, y, mtry, params: ForestParams, rng: np.random.Generator) -> DecisionTree:
    dims = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    count0: list[int] = []
    count1: list[int] = []

    def new_node(rows):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        c1 = int(y[rows].sum())
        count1.append(c1)
        count0.append(len(rows) - c1)
        return len(feature) - 1

    all_rows = np.arange(len(X))
    stack = [(new_node(all_rows), all_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        c1 = count1[node]
        c0 = count0[node]
        if c0 == 0 or c1 == 0:
            continue
        if len(rows) < 2 * params.min_leaf:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        feats = rng.choice(dims, size=mtry, replace=False)
        feats.sort()
        split = _best_split(X, y, rows, feats, params.min_leaf)
        if split is None:
            continue
        f, thr = split
        go_left = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left_rows = rows[go_left]
        right_rows = rows[~go_left]
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        # Right pushed first so the left child is processed next (fixed
        # traversal order keeps per-node RNG draws deterministic).
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))
    return DecisionTree(feature, threshold, left, right, count0, count1)


def train_forest(
    ts: TrainingSet,
    n_trees: int,
    seed: int,
    params: ForestParams | None = None,
) -> ForestModel:
    """Train a bagged ensemble of Gini-greedy CART trees.

    Each tree sees a bootstrap resample of the full training set (when
    params.bootstrap) and draws mtry candidate features per node. A
    single-label training set is allowed but warned about: every
    prediction will be that label.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    params = params or ForestParams()
    mtry = params.resolve_mtry(ts.dims)
    if len(np.unique(ts.labels)) < 2:
        warnings.warn(
            "training set contains a single label; the forest will predict it everywhere",
            stacklevel=2,
        )
    X, y = ts.features, ts.labels
    n = len(ts)
    trees = []
    for t in range(n_trees):
        if params.bootstrap:
            idx = _bootstrap_indices(seed, t, n)
            Xt, yt = X[idx], y[idx]
        else:
            Xt, yt = X, y
        trees.append(_grow_tree(Xt, yt, mtry, params, _tree_rng(seed, t, _STREAM_GROW)))
    return ForestModel(trees=trees, dims=ts.dims, seed=seed, params=params)


def predict_proba(model: ForestModel, v) -> float:
    """Crop probability for one vector: mean leaf positive fraction over trees."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.dims,):
        raise ValueError(f"expected a vector of length {model.dims}, got shape {v.shape}")
    return float(predict_proba_batch(model, v[np.newaxis, :])[0])


def predict_proba_batch(model: ForestModel, X) -> np.ndarray:
    """Crop probabilities for an (n, dims) batch of vectors."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dims:
        raise ValueError(f"expected an (n, {model.dims}) array, got shape {X.shape}")
    acc = np.zeros(len(X), dtype=np.float64)
    for tree in model.trees:
        acc += tree.proba(X)
    return acc / model.n_trees


def oob_score(model: ForestModel, ts: TrainingSet) -> float:
    """Out-of-bag accuracy: majority vote over the trees that never saw each row.

    The bootstrap is replayed from (seed, tree index), so the model must
    have been trained with bootstrap on this same training set.
    """
    if not model.params.bootstrap:
        raise ValueError("model was trained without bootstrap; no out-of-bag rows exist")
    if ts.dims != model.dims:
        raise ValueError(f"training set dims {ts.dims} != model dims {model.dims}")
    n = len(ts)
    votes1 = np.zeros(n, dtype=np.int64)
    votes = np.zeros(n, dtype=np.int64)
    for t, tree in enumerate(model.trees):
        inbag = np.zeros(n, dtype=bool)
        inbag[_bootstrap_indices(model.seed, t, n)] = True
        oob = ~inbag
        if not oob.any():
            continue
        p = tree.proba(ts.features[oob])
        votes1[oob] += p > 0.5
        votes[oob] += 1
    usable = votes > 0
    if not usable.any():
        raise ValueError("no rows were ever out of bag (training set too small)")
    pred = votes1[usable] * 2 > votes[usable]  # exact tie counts as non-crop
    return float(np.mean(pred == (ts.labels[usable] == 1)))


def save_forest(model: ForestModel, path) -> None:
    """Write the model in the versioned little-endian binary format.

    Layout: header (magic "CMRF", version, n_trees, dims, hyperparameters,
    seed), then per tree a u32 node count followed by the node arrays
    (feature i32, threshold f64, left i32, right i32, count0 i64,
    count1 i64), then a CRC32 of all preceding bytes.
    """
    p = model.params
    chunks = [
        _MODEL_HEADER.pack(
            _MODEL_MAGIC,
            _MODEL_VERSION,
            model.n_trees,
            model.dims,
            0 if p.features_per_split is None else p.features_per_split,
            p.min_leaf,
            -1 if p.max_depth is None else p.max_depth,
            1 if p.bootstrap else 0,
            model.seed,
        )
    ]
    for tree in model.trees:
        chunks.append(struct.pack("<I", tree.n_nodes))
        for arr, dt in (
            (tree.feature, "<i4"),
            (tree.threshold, "<f8"),
            (tree.left, "<i4"),
            (tree.right, "<i4"),
            (tree.count0, "<i8"),
            (tree.count1, "<i8"),
        ):
            chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


def load_forest(path) -> ForestModel:
    """Read a model written by save_forest, verifying structure and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) >= 4 and blob[:4] != _MODEL_MAGIC:
        raise BadMagicError(f"{path}: not a forest model file")
    if len(blob) < _MODEL_HEADER.size + 4:
        raise TruncatedFileError(f"{path}: file shorter than the fixed header")
    (
        _magic,
        version,
        n_trees,
        dims,
        mtry,
        min_leaf,
        max_depth,
        bootstrap,
        seed,
    ) = _MODEL_HEADER.unpack_from(blob, 0)
    if version != _MODEL_VERSION:
        raise VersionMismatchError(f"{path}: model format version {version}, expected {_MODEL_VERSION}")
    body, trailer = blob[:-4], blob[-4:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise ChecksumError(f"{path}: CRC32 mismatch")
    offset = _MODEL_HEADER.size
    trees = []
    for _ in range(n_trees):
        if offset + 4 > len(body):
            raise TruncatedFileError(f"{path}: tree table ends early")
        n_nodes = struct.unpack_from("<I", body, offset)[0]
        offset += 4
        arrays = []
        for dt, width in (("<i4", 4), ("<f8", 8), ("<i4", 4), ("<i4", 4), ("<i8", 8), ("<i8", 8)):
            nbytes = n_nodes * width
            if offset + nbytes > len(body):
                raise TruncatedFileError(f"{path}: node arrays end early")
            arrays.append(np.frombuffer(body, dtype=dt, count=n_nodes, offset=offset).copy())
            offset += nbytes
        trees.append(DecisionTree(*arrays))
    if offset != len(body):
        raise FileFormatError(f"{path}: {len(body) - offset} trailing bytes after node arrays")
    params = ForestParams(
        features_per_split=None if mtry == 0 else mtry,
        min_leaf=min_leaf,
        max_depth=None if max_depth < 0 else max_depth,
        bootstrap=bool(bootstrap),
    )
    return ForestModel(trees=trees, dims=dims, seed=seed, params=params)
