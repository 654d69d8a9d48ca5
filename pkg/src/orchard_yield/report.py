"""CSV report writers and the per-tree yield summary."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

from .io import TreeRecord
from .metrics import EvalReport, PRCurve, relative_error
from .regress import LinearModel, YieldModel, estimate_yield, predict


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_rows(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


EVAL_HEADER = (
    "scope", "scene_id", "num_gt", "num_predictions", "tp", "fp", "fn",
    "precision", "recall", "ap", "precision_undefined", "recall_undefined",
)


def write_eval_csv(path, report: EvalReport) -> None:
    """One row per scene, then ``aggregate_micro`` and ``aggregate_macro`` rows."""
    rows = [
        ("scene", s.scene_id, s.num_gt, s.num_predictions, s.tp, s.fp, s.fn,
         s.precision, s.recall, s.ap, s.precision_undefined, s.recall_undefined)
        for s in report.scenes
    ]
    common = (report.total_gt, report.total_predictions, report.tp, report.fp, report.fn)
    rows.append(("aggregate_micro", "*", *common, report.micro_precision, report.micro_recall,
                 None, report.precision_undefined, report.recall_undefined))
    rows.append(("aggregate_macro", "*", *common, report.macro_precision, report.macro_recall,
                 report.mean_ap, report.precision_undefined, report.recall_undefined))
    write_rows(path, EVAL_HEADER, rows)


def write_pr_csv(path, curve: PRCurve) -> None:
    write_rows(path, ("recall", "precision"), curve)


def write_residuals_csv(path, records: Sequence[TreeRecord], model: LinearModel) -> None:
    rows = []
    for r in records:
        fitted = predict(model, r.estimated)
        rows.append((
            r.tree_no, r.estimated, r.ground_truth,
            relative_error(r.estimated, r.ground_truth) if r.ground_truth else None,
            fitted, fitted - r.ground_truth,
            relative_error(fitted, r.ground_truth) if r.ground_truth else None,
        ))
    write_rows(path, ("tree_no", "estimated", "ground_truth", "relative_error_detection",
                  "fitted", "residual", "relative_error_fitted"), rows)


@dataclass
class YieldRow:
    tree_no: str
    detected: float
    corrected: float
    yield_mass: float
    ground_truth: Optional[float] = None
    count_relative_error: Optional[float] = None
    true_yield: Optional[float] = None
    yield_relative_error: Optional[float] = None


@dataclass
class YieldSummary:
    rows: list[YieldRow]
    total_detected: float
    total_corrected: float
    total_yield: float
    total_truth: Optional[float]
    aggregate_relative_error: Optional[float]  # |sum corrected - sum truth| / sum truth
    mean_relative_error: Optional[float]  # mean of per-tree relative errors
    total_true_yield: Optional[float] = None
    yield_aggregate_relative_error: Optional[float] = None


def summarize_yield(records: Sequence[TreeRecord], ym: YieldModel) -> YieldSummary:
    """Corrected counts and yield per tree, with error aggregates where truth is known.

    The aggregate error compares totals over all trees; the mean error averages
    per-tree errors. Trees with missing or zero ground truth are left out of
    both.
    """
    rows = []
    for r in records:
        corrected, mass = estimate_yield(r.estimated, ym)
        row = YieldRow(r.tree_no, r.estimated, corrected, mass, r.ground_truth)
        if r.ground_truth:
            row.count_relative_error = relative_error(corrected, r.ground_truth)
        if r.yield_kg:
            row.true_yield = r.yield_kg
            row.yield_relative_error = relative_error(mass, r.yield_kg)
        rows.append(row)
    with_truth = [row for row in rows if row.count_relative_error is not None]
    total_truth = agg = mean_err = None
    if with_truth:
        total_truth = sum(row.ground_truth for row in with_truth)
        agg = relative_error(sum(row.corrected for row in with_truth), total_truth)
        mean_err = sum(row.count_relative_error for row in with_truth) / len(with_truth)
    with_yield = [row for row in rows if row.true_yield is not None]
    total_true_yield = yield_agg = None
    if with_yield:
        total_true_yield = sum(row.true_yield for row in with_yield)
        yield_agg = relative_error(sum(row.yield_mass for row in with_yield), total_true_yield)
    return YieldSummary(
        rows=rows,
        total_detected=sum(row.detected for row in rows),
        total_corrected=sum(row.corrected for row in rows),
        total_yield=sum(row.yield_mass for row in rows),
        total_truth=total_truth,
        aggregate_relative_error=agg,
        mean_relative_error=mean_err,
        total_true_yield=total_true_yield,
        yield_aggregate_relative_error=yield_agg,
    )


def write_yield_csv(path, summary: YieldSummary) -> None:
    rows = [
        (r.tree_no, r.detected, r.corrected, r.yield_mass, r.ground_truth,
         r.count_relative_error, r.true_yield, r.yield_relative_error)
        for r in summary.rows
    ]
    rows.append(("TOTAL", summary.total_detected, summary.total_corrected, summary.total_yield,
                 summary.total_truth, summary.aggregate_relative_error,
                 summary.total_true_yield, summary.yield_aggregate_relative_error))
    rows.append(("MEAN_RELATIVE_ERROR", None, None, None, None, summary.mean_relative_error, None, None))
    write_rows(path, ("tree_no", "detected", "corrected", "yield_kg", "ground_truth",
                  "count_relative_error", "true_yield_kg", "yield_relative_error"), rows)


def write_history_csv(path, columns: dict[str, Sequence[float]]) -> None:
    names = list(columns)
    length = max((len(v) for v in columns.values()), default=0)
    rows = []
    for i in range(length):
        rows.append((i, *[columns[n][i] if i < len(columns[n]) else None for n in names]))
    write_rows(path, ("epoch", *names), rows)
