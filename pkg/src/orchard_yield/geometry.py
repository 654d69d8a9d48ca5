"""Bounding-box arithmetic, confidence filtering, NMS and fruit counting.

Boxes are axis-aligned rectangles in pixel coordinates (x_min, y_min, x_max, y_max).
Coordinates are real-valued; zero-area boxes are legal and have IoU 0 with everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_CONF_THRESHOLD = 0.15
DEFAULT_IOU_THRESHOLD = 0.5


class InvalidBoxError(ValueError):
    """Raised when a box has min > max on some axis or non-finite coordinates."""


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBoxError(f"non-finite box coordinates: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InvalidBoxError(f"box has min > max: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    @classmethod
    def from_cxcywh(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


@dataclass(frozen=True)
class Detection:
    box: BBox
    class_id: int = 0
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class GroundTruthBox:
    box: BBox
    class_id: int = 0

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


def intersection_area(a: BBox, b: BBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Returns 0.0 when the union has zero area (both boxes degenerate).
    """
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    # Clamp guards against float round-off pushing identical boxes above 1.
    return min(1.0, max(0.0, inter / union))


def _check_threshold(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def filter_confidence(dets: Iterable[Detection], threshold: float) -> list[Detection]:
    """Keep detections with confidence >= threshold, preserving input order."""
    _check_threshold("threshold", threshold)
    return [d for d in dets if d.confidence >= threshold]


def _priority_order(dets: Sequence[Detection]) -> list[int]:
    # Descending confidence; ties resolved by lower input index.
    return sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))


def nms_indices(dets: Sequence[Detection], iou_threshold: float) -> list[int]:
    """Indices kept by greedy per-class NMS, in descending-confidence order."""
    _check_threshold("iou_threshold", iou_threshold)
    kept: list[int] = []
    for i in _priority_order(dets):
        d = dets[i]
        suppressed = any(
            dets[k].class_id == d.class_id and iou(dets[k].box, d.box) >= iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(i)
    return kept


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-class non-maximum suppression.

    The highest-confidence remaining detection is kept and every same-class
    detection overlapping it with IoU >= ``iou_threshold`` is dropped. Output is
    sorted by descending confidence, ties broken by input index.
    """
    return [dets[i] for i in nms_indices(dets, iou_threshold)]


def count_fruits(
    dets: Sequence[Detection],
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> int:
    """Number of detections surviving confidence filtering followed by NMS."""
    return len(nms(filter_confidence(dets, conf_threshold), iou_threshold))
