"""Patch-feature anomaly scoring with a precomputed collaborative
representation residual, exact nearest-neighbor baselines, binary
interchange formats, evaluation metrics, and a benchmark harness."""

from .baselines import (
    CoresetSelection,
    NnResult,
    greedy_coreset,
    knn_avg_distance,
    nn_distance,
)
from .bench import BenchReport, bench_compare
from .core import (
    CrdScorer,
    FeatureBank,
    QueryBatch,
    build_scorer,
    crd_score,
    residual_score,
    solve_coefficients,
)
from .errors import (
    ChecksumError,
    CrdError,
    FormatError,
    NumericalError,
    ParameterError,
    UndefinedMetricError,
    ValidationError,
)
from .evalkit import (
    PatchGrid,
    RocCurve,
    ScoredImage,
    aggregate_image_score,
    auroc,
    calibrate_threshold,
    flag_anomalies,
    render_heatmap,
    roc_curve,
    synth_dataset,
)
from .io import (
    ManifestEntry,
    load_model,
    read_feature_tensor,
    read_ftb1,
    read_manifest,
    save_model,
    write_feature_tensor,
    write_ftb1,
    write_manifest,
    write_pgm16,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "ChecksumError",
    "CoresetSelection",
    "CrdError",
    "CrdScorer",
    "FeatureBank",
    "FormatError",
    "ManifestEntry",
    "NnResult",
    "NumericalError",
    "ParameterError",
    "PatchGrid",
    "QueryBatch",
    "RocCurve",
    "ScoredImage",
    "UndefinedMetricError",
    "ValidationError",
    "aggregate_image_score",
    "auroc",
    "bench_compare",
    "build_scorer",
    "calibrate_threshold",
    "crd_score",
    "flag_anomalies",
    "greedy_coreset",
    "knn_avg_distance",
    "load_model",
    "nn_distance",
    "read_feature_tensor",
    "read_ftb1",
    "read_manifest",
    "render_heatmap",
    "residual_score",
    "roc_curve",
    "save_model",
    "solve_coefficients",
    "synth_dataset",
    "write_feature_tensor",
    "write_ftb1",
    "write_manifest",
    "write_pgm16",
]
