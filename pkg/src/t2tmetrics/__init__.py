"""Quantify how well a training set represents a test set.

The toolkit scores per-detection train2test distances (squared Mahalanobis
distance from a Gaussian fitted to training features), summarizes them as
the distance-ranked average precision AP_t2t next to conventional AP, maps
accuracies back to same-domain image counts, and emits CSV/SVG diagnostics.
"""

from .errors import (
    BindingError,
    DataError,
    NumericalError,
    ParseError,
    SingularCovarianceError,
    T2TError,
    UndefinedMetricError,
    ValidationError,
)
from .feature_model import (
    AnnotatedEntry,
    DistanceAnnotatedOutcome,
    GaussianTrainModel,
    Kind,
    annotate_distances,
    default_regularization,
    fit_gaussian,
    load_model,
    model_from_moments,
    save_model,
    train2test_distance,
)
from .ingest import (
    BoundingBox,
    Detection,
    DetectionSet,
    FeatureMatrix,
    GroundTruthInstance,
    GroundTruthSet,
    ImageInfo,
    bind_features,
    load_detections,
    load_feature_matrix,
    load_ground_truth,
    write_detections,
    write_feature_matrix,
    write_ground_truth,
)
from .matching import IOU_GRID, MatchOutcome, iou, match_detections
from .metrics import (
    DEFAULT_SCORE_THRESHOLDS,
    MetricReport,
    RegimeError,
    ap_over_iou_range,
    ap_t2t,
    ap_t2t_profile,
    average_precision,
    precision_recall,
    t2t_precision_recall,
)
from .replacement import (
    AccuracyCurve,
    ReplacementResult,
    average_runs,
    build_accuracy_curve,
    matching_image_count,
    replacement_gain,
)
from .report import (
    BarChart,
    Histogram,
    Series,
    SeriesPlot,
    distance_histogram,
    export_csv,
    render_svg,
    replacement_rows_csv,
    scaling_series,
)
from .scenario import Scenario, ScenarioSpec, generate_scenario, shrink_tp_distances

__version__ = "0.1.0"

__all__ = [
    "AccuracyCurve",
    "AnnotatedEntry",
    "BarChart",
    "BindingError",
    "BoundingBox",
    "DataError",
    "DEFAULT_SCORE_THRESHOLDS",
    "Detection",
    "DetectionSet",
    "DistanceAnnotatedOutcome",
    "FeatureMatrix",
    "GaussianTrainModel",
    "GroundTruthInstance",
    "GroundTruthSet",
    "Histogram",
    "ImageInfo",
    "IOU_GRID",
    "Kind",
    "MatchOutcome",
    "MetricReport",
    "NumericalError",
    "ParseError",
    "RegimeError",
    "ReplacementResult",
    "Scenario",
    "ScenarioSpec",
    "Series",
    "SeriesPlot",
    "SingularCovarianceError",
    "T2TError",
    "UndefinedMetricError",
    "ValidationError",
    "annotate_distances",
    "ap_over_iou_range",
    "ap_t2t",
    "ap_t2t_profile",
    "average_precision",
    "average_runs",
    "bind_features",
    "build_accuracy_curve",
    "default_regularization",
    "distance_histogram",
    "export_csv",
    "fit_gaussian",
    "generate_scenario",
    "iou",
    "load_detections",
    "load_feature_matrix",
    "load_ground_truth",
    "load_model",
    "match_detections",
    "matching_image_count",
    "model_from_moments",
    "precision_recall",
    "render_svg",
    "replacement_gain",
    "replacement_rows_csv",
    "save_model",
    "scaling_series",
    "shrink_tp_distances",
    "t2t_precision_recall",
    "train2test_distance",
    "write_detections",
    "write_feature_matrix",
    "write_ground_truth",
]
