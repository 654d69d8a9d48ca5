"""Detection matching, precision/recall curves, AP and relative error."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .geometry import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_IOU_THRESHOLD,
    Detection,
    GroundTruthBox,
    filter_confidence,
    iou,
)


@dataclass(frozen=True)
class MatchEntry:
    det_index: int
    confidence: float
    gt_index: Optional[int] = None


@dataclass
class MatchResult:
    """Outcome of greedy one-to-one matching for one image.

    ``true_positives`` and ``false_positives`` are kept in the order the
    predictions were processed (descending confidence).
    """

    true_positives: list[MatchEntry] = field(default_factory=list)
    false_positives: list[MatchEntry] = field(default_factory=list)
    false_negative_count: int = 0

    @property
    def num_predictions(self) -> int:
        return len(self.true_positives) + len(self.false_positives)

    @property
    def num_ground_truth(self) -> int:
        return len(self.true_positives) + self.false_negative_count

    def ranked(self) -> list[tuple[MatchEntry, bool]]:
        """All predictions in confidence rank order, flagged True for TP."""
        entries = [(e, True) for e in self.true_positives]
        entries += [(e, False) for e in self.false_positives]
        entries.sort(key=lambda item: (-item[0].confidence, item[0].det_index))
        return entries


# A PR curve is an ordered list of (recall, precision) points.
PRCurve = list[tuple[float, float]]


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedily match predictions to ground truth, highest confidence first.

    Each prediction takes its best-IoU unmatched ground-truth box of the same
    class (ties go to the lower gt index); it is a true positive when that IoU
    reaches ``iou_threshold`` and a false positive otherwise. Greedy, not
    globally optimal, matching is the contract.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    matched = [False] * len(gts)
    result = MatchResult()
    for i in order:
        p = preds[i]
        best_j, best_iou = None, -1.0
        for j, g in enumerate(gts):
            if matched[j] or g.class_id != p.class_id:
                continue
            v = iou(p.box, g.box)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None and best_iou >= iou_threshold:
            matched[best_j] = True
            result.true_positives.append(MatchEntry(i, p.confidence, best_j))
        else:
            result.false_positives.append(MatchEntry(i, p.confidence, None))
    result.false_negative_count = matched.count(False)
    return result


def precision_recall_curve(match: MatchResult, total_gt: int) -> PRCurve:
    """Sweep the confidence rank and emit (recall, precision) after each prediction.

    With ``total_gt == 0`` recall is defined as 0 throughout.
    """
    if total_gt < 0:
        raise ValueError("total_gt must be non-negative")
    curve: PRCurve = []
    tp = fp = 0
    for _, is_tp in match.ranked():
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt else 0.0
        curve.append((recall, tp / (tp + fp)))
    return curve


def average_precision(curve: PRCurve) -> float:
    """All-point interpolated AP.

    AP = sum_i (r_i - r_{i-1}) * max{p_k : r_k >= r_i}, with r_0 = 0.
    An empty curve has AP 0.
    """
    if not curve:
        return 0.0
    recalls = [r for r, _ in curve]
    precisions = [p for _, p in curve]
    # Running max from the right gives the interpolated precision envelope.
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_r) * p
        prev_r = r
    return min(1.0, max(0.0, ap))


def relative_error(predicted: float, truth: float) -> float:
    """|predicted - truth| / truth."""
    if truth == 0:
        raise ZeroDivisionError("relative error is undefined for truth == 0")
    return abs(predicted - truth) / truth


@dataclass
class SceneMetrics:
    scene_id: str
    num_gt: int
    num_predictions: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    ap: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    curve: PRCurve = field(default_factory=list)


@dataclass
class EvalReport:
    """Per-scene and aggregate detection metrics.

    Micro aggregates pool TP/FP/FN over scenes; mean AP is the macro average
    of per-scene AP over scenes that have ground truth. Undefined rates are
    reported as 1.0 (precision, recall) or 0.0 (mean AP) with a flag set.
    """

    scenes: list[SceneMetrics]
    total_gt: int
    total_predictions: int
    tp: int
    fp: int
    fn: int
    micro_precision: float
    micro_recall: float
    macro_precision: float
    macro_recall: float
    mean_ap: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    mean_ap_undefined: bool = False

    @property
    def count_ratio(self) -> float:
        """Predictions kept after filtering divided by ground-truth count."""
        return self.total_predictions / self.total_gt if self.total_gt else float("nan")


def _rate(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 1.0, True
    return num / den, False


def evaluate_scene(
    scene_id: str,
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> SceneMetrics:
    kept = filter_confidence(preds, conf_threshold)
    match = match_detections(kept, gts, iou_threshold)
    curve = precision_recall_curve(match, len(gts))
    tp, fp, fn = len(match.true_positives), len(match.false_positives), match.false_negative_count
    precision, p_undef = _rate(tp, tp + fp)
    recall, r_undef = _rate(tp, len(gts))
    return SceneMetrics(
        scene_id=scene_id,
        num_gt=len(gts),
        num_predictions=len(kept),
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        ap=average_precision(curve),
        precision_undefined=p_undef,
        recall_undefined=r_undef,
        curve=curve,
    )


def aggregate(scenes: Sequence[SceneMetrics]) -> EvalReport:
    tp = sum(s.tp for s in scenes)
    fp = sum(s.fp for s in scenes)
    fn = sum(s.fn for s in scenes)
    total_gt = sum(s.num_gt for s in scenes)
    micro_p, p_undef = _rate(tp, tp + fp)
    micro_r, r_undef = _rate(tp, total_gt)
    with_gt = [s for s in scenes if s.num_gt > 0]
    if with_gt:
        mean_ap = sum(s.ap for s in with_gt) / len(with_gt)
    else:
        mean_ap = 0.0
    n = len(scenes)
    return EvalReport(
        scenes=list(scenes),
        total_gt=total_gt,
        total_predictions=sum(s.num_predictions for s in scenes),
        tp=tp,
        fp=fp,
        fn=fn,
        micro_precision=micro_p,
        micro_recall=micro_r,
        macro_precision=sum(s.precision for s in scenes) / n if n else 1.0,
        macro_recall=sum(s.recall for s in scenes) / n if n else 1.0,
        mean_ap=mean_ap,
        precision_undefined=p_undef,
        recall_undefined=r_undef,
        mean_ap_undefined=not with_gt,
    )


def evaluate_dataset(
    scenes: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    scene_ids: Optional[Sequence[str]] = None,
) -> EvalReport:
    """Evaluate every (predictions, ground truth) scene and aggregate."""
    if scene_ids is None:
        scene_ids = [str(i) for i in range(len(scenes))]
    per_scene = [
        evaluate_scene(sid, preds, gts, conf_threshold, iou_threshold)
        for sid, (preds, gts) in zip(scene_ids, scenes)
    ]
    return aggregate(per_scene)
