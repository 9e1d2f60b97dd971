"""Detection evaluation: peak extraction, matching, FROC analysis."""

from .assignment import SENTINEL, MatchOutcome, hungarian_assign, match_detections
from .froc import (
    BootstrapSummary,
    DetectionRecord,
    FrocCurve,
    OperatingPoint,
    bootstrap_fauc,
    curve_from_records,
    detection_record,
    fauc,
    froc_curve,
    load_froc_csv,
    operating_point_metrics,
    predicted_count,
    save_froc_csv,
)
from .nms import Candidate, non_max_suppression

__all__ = [
    "SENTINEL",
    "MatchOutcome",
    "hungarian_assign",
    "match_detections",
    "BootstrapSummary",
    "DetectionRecord",
    "FrocCurve",
    "OperatingPoint",
    "bootstrap_fauc",
    "curve_from_records",
    "detection_record",
    "fauc",
    "froc_curve",
    "load_froc_csv",
    "operating_point_metrics",
    "predicted_count",
    "save_froc_csv",
    "Candidate",
    "non_max_suppression",
]
