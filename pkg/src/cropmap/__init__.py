"""Embedding-based cropland mapping toolkit.

Stores per-pixel embedding rasters as quantized tiles, verifies them by
k-means clustering, trains a random-forest probability classifier from
labeled points, thresholds to a binary cropland map, and scores it with
standard accuracy metrics. A synthetic scene generator with known ground
truth stands in for cloud inference so everything runs at desk scale.
"""

__version__ = "0.1.0"

from .assess import (
    AgreementReport,
    ConfusionMatrix,
    MetricsReport,
    build_confusion,
    compare_maps,
    compute_metrics,
    f1_from_ua_pa,
)
from .cluster import KMeansModel, assign, cluster_map, fit_kmeans, load_kmeans, save_kmeans
from .errors import (
    BadMagicError,
    ChecksumError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .forest import (
    DecisionTree,
    ForestModel,
    ForestParams,
    TrainingSet,
    load_forest,
    oob_score,
    predict_proba,
    predict_proba_batch,
    save_forest,
    train_forest,
)
from .geometry import (
    GeoTransform,
    Roi,
    load_roi,
    lonlat_to_pixel,
    pixel_to_lonlat,
    point_in_roi,
    rasterize_roi,
    save_roi,
)
from .mapping import classify_map, default_cluster_palette, render, render_array, threshold_map
from .points import LabeledPoint, filter_subset, load_points, save_points
from .synth import ClassSpec, SceneSpec, generate_scene, sample_labels
from .tilestore import (
    ClassMap,
    EmbeddingTile,
    QuantizationParams,
    bytes_per_pixel,
    dequantize,
    quantize,
    read_tile,
    sample_at_points,
    sample_vectors,
    saturation_count,
    write_tile,
)

__all__ = [
    "__version__",
    "AgreementReport",
    "BadMagicError",
    "ChecksumError",
    "ClassMap",
    "ClassSpec",
    "ConfusionMatrix",
    "DecisionTree",
    "EmbeddingTile",
    "FileFormatError",
    "ForestModel",
    "ForestParams",
    "GeoTransform",
    "KMeansModel",
    "LabeledPoint",
    "MetricsReport",
    "QuantizationParams",
    "Roi",
    "SceneSpec",
    "TrainingSet",
    "TruncatedFileError",
    "VersionMismatchError",
    "assign",
    "build_confusion",
    "bytes_per_pixel",
    "classify_map",
    "cluster_map",
    "compare_maps",
    "compute_metrics",
    "default_cluster_palette",
    "dequantize",
    "f1_from_ua_pa",
    "filter_subset",
    "fit_kmeans",
    "generate_scene",
    "load_forest",
    "load_kmeans",
    "load_points",
    "load_roi",
    "lonlat_to_pixel",
    "oob_score",
    "pixel_to_lonlat",
    "point_in_roi",
    "predict_proba",
    "predict_proba_batch",
    "quantize",
    "rasterize_roi",
    "read_tile",
    "render",
    "render_array",
    "sample_at_points",
    "sample_labels",
    "sample_vectors",
    "saturation_count",
    "save_forest",
    "save_kmeans",
    "save_points",
    "save_roi",
    "threshold_map",
    "train_forest",
    "write_tile",
]
