"""Fruit counting, detection metrics, distillation numerics and yield regression."""

from .geometry import BBox, Detection, GroundTruthBox, count_fruits, filter_confidence, iou, nms
from .metrics import (
    EvalReport,
    MatchResult,
    average_precision,
    evaluate_dataset,
    match_detections,
    precision_recall_curve,
    relative_error,
)
from .regress import (
    DataPoint,
    GdConfig,
    LinearModel,
    YieldModel,
    estimate_yield,
    fit_gd,
    fit_ols,
    mse,
    predict,
)

__version__ = "0.1.0"
