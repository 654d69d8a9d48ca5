"""Detection-head losses: the composite hard loss and the response-based distillation loss.

A detection head emits, per grid cell, one objectness logit, K class logits and
four box values. Hard loss terms:

* objectness: mean BCE of sigmoid(logit) against the 0/1 target over all cells
* class: mean cross-entropy of softmax(class logits) on positive cells
* box: mean squared error over the box values of positive cells

The soft term compares student and teacher heads: temperature-softened class
KL plus the objectness Bernoulli KL, both averaged over all cells and scaled
by T**2. Only class and objectness outputs are distilled, not boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .softmax import (
    bce_with_logits,
    binary_kl_with_logits,
    kl_divergence,
    sigmoid,
    temperature_log_softmax,
    temperature_softmax,
)


class ShapeMismatchError(ValueError):
    pass


@dataclass
class HeadOutput:
    objectness: np.ndarray  # (N,)
    class_logits: np.ndarray  # (N, K)
    boxes: np.ndarray  # (N, 4)

    def __post_init__(self) -> None:
        self.objectness = np.asarray(self.objectness, dtype=float).reshape(-1)
        self.class_logits = np.asarray(self.class_logits, dtype=float)
        self.boxes = np.asarray(self.boxes, dtype=float)
        n = self.objectness.shape[0]
        if self.class_logits.ndim != 2 or self.class_logits.shape[0] != n:
            raise ShapeMismatchError(f"class_logits must be ({n}, K), got {self.class_logits.shape}")
        if self.boxes.shape != (n, 4):
            raise ShapeMismatchError(f"boxes must be ({n}, 4), got {self.boxes.shape}")
        for name in ("objectness", "class_logits", "boxes"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def num_cells(self) -> int:
        return self.objectness.shape[0]

    @property
    def num_classes(self) -> int:
        return self.class_logits.shape[1]


@dataclass
class TargetSet:
    objectness: np.ndarray  # (N,) in {0, 1}
    classes: np.ndarray  # (N, K) one-hot on positive cells
    boxes: np.ndarray  # (N, 4)

    def __post_init__(self) -> None:
        self.objectness = np.asarray(self.objectness, dtype=float).reshape(-1)
        self.classes = np.asarray(self.classes, dtype=float)
        self.boxes = np.asarray(self.boxes, dtype=float)
        if not np.all((self.objectness == 0) | (self.objectness == 1)):
            raise ValueError("target objectness must be 0 or 1")
        pos = self.positive
        if pos.any() and not np.allclose(self.classes[pos].sum(axis=1), 1.0):
            raise ValueError("class targets must be one-hot on positive cells")

    @property
    def positive(self) -> np.ndarray:
        return self.objectness == 1


@dataclass(frozen=True)
class LossBreakdown:
    objectness: float
    classification: float
    box: float
    total: float


@dataclass(frozen=True)
class DistillBreakdown:
    hard: LossBreakdown
    soft_class: float
    soft_objectness: float
    soft: float  # T**2 * (soft_class + soft_objectness)
    total: float


@dataclass
class HeadGradient:
    objectness: np.ndarray
    class_logits: np.ndarray
    boxes: np.ndarray


def _check_shapes(pred: HeadOutput, other) -> None:
    oc = other.classes if isinstance(other, TargetSet) else other.class_logits
    if (
        pred.objectness.shape != other.objectness.shape
        or pred.class_logits.shape != oc.shape
        or pred.boxes.shape != other.boxes.shape
    ):
        raise ShapeMismatchError("prediction and target grids differ in shape")


def yolo_hard_loss(pred: HeadOutput, target: TargetSet) -> LossBreakdown:
    _check_shapes(pred, target)
    f_obj = float(bce_with_logits(pred.objectness, target.objectness).mean()) if pred.num_cells else 0.0
    pos = target.positive
    if pos.any():
        log_p = temperature_log_softmax(pred.class_logits[pos])
        f_cl = float(-(target.classes[pos] * log_p).sum(axis=1).mean())
        f_bb = float(((pred.boxes[pos] - target.boxes[pos]) ** 2).mean())
    else:
        f_cl = f_bb = 0.0
    return LossBreakdown(f_obj, f_cl, f_bb, f_obj + f_cl + f_bb)


def yolo_hard_loss_grad(pred: HeadOutput, target: TargetSet) -> HeadGradient:
    """Gradient of ``yolo_hard_loss(...).total`` with respect to the prediction head."""
    _check_shapes(pred, target)
    n = pred.num_cells
    g_obj = (sigmoid(pred.objectness) - target.objectness) / n if n else np.zeros(0)
    g_cls = np.zeros_like(pred.class_logits)
    g_box = np.zeros_like(pred.boxes)
    pos = target.positive
    n_pos = int(pos.sum())
    if n_pos:
        g_cls[pos] = (temperature_softmax(pred.class_logits[pos]) - target.classes[pos]) / n_pos
        g_box[pos] = 2.0 * (pred.boxes[pos] - target.boxes[pos]) / (4 * n_pos)
    return HeadGradient(g_obj, g_cls, g_box)


def distillation_loss(student: HeadOutput, teacher: HeadOutput, target: TargetSet, cfg) -> DistillBreakdown:
    """Weighted sum of the hard loss and the T**2-scaled soft-target loss.

    ``cfg`` is a :class:`~orchard_yield.distill.train.DistillConfig` (or any
    object with ``temperature``, ``lambda_hard`` and ``lambda_soft``).
    """
    _check_shapes(student, teacher)
    hard = yolo_hard_loss(student, target)
    t = cfg.temperature
    if student.num_cells:
        soft_cls = float(kl_divergence(teacher.class_logits, student.class_logits, t).mean())
        soft_obj = float(binary_kl_with_logits(teacher.objectness, student.objectness).mean())
    else:
        soft_cls = soft_obj = 0.0
    soft = t * t * (soft_cls + soft_obj)
    total = cfg.lambda_hard * hard.total + cfg.lambda_soft * soft
    return DistillBreakdown(hard, soft_cls, soft_obj, soft, total)


def distillation_loss_grad(student: HeadOutput, teacher: HeadOutput, target: TargetSet, cfg) -> HeadGradient:
    _check_shapes(student, teacher)
    g = yolo_hard_loss_grad(student, target)
    t = cfg.temperature
    n = student.num_cells
    g_obj = cfg.lambda_hard * g.objectness
    g_cls = cfg.lambda_hard * g.class_logits
    if n:
        q_s = temperature_softmax(student.class_logits, t)
        q_t = temperature_softmax(teacher.class_logits, t)
        g_cls = g_cls + cfg.lambda_soft * t * (q_s - q_t) / n
        p_diff = sigmoid(student.objectness) - sigmoid(teacher.objectness)
        g_obj = g_obj + cfg.lambda_soft * t * t * p_diff / n
    return HeadGradient(g_obj, g_cls, cfg.lambda_hard * g.boxes)
