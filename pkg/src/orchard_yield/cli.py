"""Command-line entry point: ``orchard-yield {eval,fit,predict-yield,distill-demo}``.

Exit codes: 0 success, 1 data error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from . import report, svg
from .distill.train import ConfigError, DemoConfig, DistillConfig, run_demo
from .geometry import DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD, count_fruits
from .io import (
    DataError,
    TreeRecord,
    load_model,
    load_scene,
    load_tree_records,
    net_to_dict,
    save_distill_run,
    save_model,
    write_tree_records,
)
from .metrics import evaluate_scene, aggregate
from .regress import (
    PUBLISHED_COUNT_MODEL,
    DegenerateDataError,
    DivergenceError,
    GdConfig,
    LinearModel,
    YieldModel,
    fit_gd,
    fit_ols,
    points,
)

log = logging.getLogger("orchard_yield")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
GD_AGREEMENT_TOL = 1e-6


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    seed: int = 0
    out_dir: str = "out"
    mean_fruit_weight: float = 1.0
    regression: GdConfig = field(default_factory=GdConfig)
    distill: DemoConfig = field(default_factory=DemoConfig)

    def validate(self) -> None:
        for name in ("conf_threshold", "iou_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.mean_fruit_weight > 0:
            raise ConfigError("mean_fruit_weight must be positive")


def _build(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def load_config(path: Optional[str]) -> RunConfig:
    """Read a JSON run configuration.

    Top-level keys mirror :class:`RunConfig`; ``regression`` holds
    :class:`GdConfig` fields and ``distill`` holds :class:`DistillConfig`
    fields plus the demo's network/teacher settings.
    """
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    doc = dict(doc)
    regression = _build(GdConfig, doc.pop("regression", {}), "regression config")
    distill_doc = dict(doc.pop("distill", {}))
    demo_keys = {f.name for f in fields(DemoConfig)} - {"distill"}
    demo_values = {k: distill_doc.pop(k) for k in list(distill_doc) if k in demo_keys}
    for k in ("teacher_hidden", "student_hidden"):
        if k in demo_values:
            demo_values[k] = tuple(demo_values[k])
    distill_cfg = _build(DistillConfig, distill_doc, "distill config")
    demo = _build(DemoConfig, {"distill": distill_cfg, **demo_values}, "distill config")
    cfg = _build(RunConfig, {**doc, "regression": regression, "distill": demo}, "config")
    if "seed" in doc and "seed" not in distill_doc:
        cfg.distill = replace(demo, distill=replace(distill_cfg, seed=cfg.seed))
    return cfg


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.conf is not None:
        cfg.conf_threshold = args.conf
    if args.iou is not None:
        cfg.iou_threshold = args.iou
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.distill = replace(cfg.distill, distill=replace(cfg.distill.distill, seed=args.seed))
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def cmd_eval(args, cfg: RunConfig) -> int:
    if not args.scenes:
        raise UsageError("eval needs at least one scene file")
    scenes = [load_scene(p) for p in args.scenes]
    out = _out_dir(cfg)
    per_scene = [
        evaluate_scene(s.image_id, s.detections, s.ground_truth, cfg.conf_threshold, cfg.iou_threshold)
        for s in scenes
    ]
    rep = aggregate(per_scene)
    report.write_eval_csv(out / "eval_metrics.csv", rep)
    for m in per_scene:
        name = _safe_name(m.scene_id)
        report.write_pr_csv(out / f"pr_{name}.csv", m.curve)
        plot = svg.line_chart(
            [svg.Series("precision", [r for r, _ in m.curve], [p for _, p in m.curve], style="step")],
            title=f"PR curve {m.scene_id} (AP={m.ap:.3f})",
            x_label="recall", y_label="precision", x_range=(0.0, 1.0), y_range=(0.0, 1.0),
        )
        (out / f"pr_{name}.svg").write_text(plot, encoding="utf-8")

    # Views of the same tree are summed into one count.
    trees: "OrderedDict[str, list[float]]" = OrderedDict()
    for s in scenes:
        n = count_fruits(s.detections, cfg.conf_threshold, cfg.iou_threshold)
        entry = trees.setdefault(s.tree, [0, 0])
        entry[0] += n
        entry[1] += len(s.ground_truth)
    write_tree_records(out / "tree_counts.csv", [TreeRecord(t, c, g) for t, (c, g) in trees.items()])

    print(f"scenes={len(per_scene)} gt={rep.total_gt} predictions={rep.total_predictions} "
          f"tp={rep.tp} fp={rep.fp} fn={rep.fn}")
    print(f"micro precision={rep.micro_precision:.4f} recall={rep.micro_recall:.4f} | "
          f"macro precision={rep.macro_precision:.4f} recall={rep.macro_recall:.4f} mAP={rep.mean_ap:.4f}")
    if rep.precision_undefined:
        print("note: no predictions above threshold; precision reported as 1.0 (undefined)")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig) -> int:
    records = load_tree_records(args.records, require_truth=True)
    data = points((r.estimated, r.ground_truth) for r in records)
    gd_cfg = cfg.regression
    if args.lr is not None:
        gd_cfg = replace(gd_cfg, learning_rate=args.lr)
    if args.epochs is not None:
        gd_cfg = replace(gd_cfg, epochs=args.epochs)
    ols = fit_ols(data)
    fit = fit_gd(data, gd_cfg)
    gap = max(abs(fit.model.a - ols.a), abs(fit.model.b - ols.b))
    out = _out_dir(cfg)
    save_model(
        out / "model.json", fit.model,
        ols={"a": ols.a, "b": ols.b},
        gd={"learning_rate": gd_cfg.learning_rate, "epochs": gd_cfg.epochs,
            "standardize": gd_cfg.standardize, "final_loss": fit.history[-1]},
        n_points=len(data),
    )
    report.write_residuals_csv(out / "residuals.csv", records, fit.model)
    report.write_history_csv(out / "fit_history.csv", {"loss": fit.history})
    xs = [r.estimated for r in records]
    lo, hi = min(xs), max(xs)
    plot = svg.line_chart(
        [
            svg.Series("trees", xs, [r.ground_truth for r in records], style="points"),
            svg.Series("gradient descent", [lo, hi], [fit.model.a * lo + fit.model.b, fit.model.a * hi + fit.model.b]),
            svg.Series("published", [lo, hi], [PUBLISHED_COUNT_MODEL.a * lo + PUBLISHED_COUNT_MODEL.b,
                                               PUBLISHED_COUNT_MODEL.a * hi + PUBLISHED_COUNT_MODEL.b]),
        ],
        title="Count correction fit", x_label="detected count", y_label="true count",
    )
    (out / "fit.svg").write_text(plot, encoding="utf-8")
    print(f"gradient descent: a={fit.model.a:.6f} b={fit.model.b:.6f}")
    print(f"closed form:      a={ols.a:.6f} b={ols.b:.6f} (max coefficient gap {gap:.2e})")
    print(f"published:        a={PUBLISHED_COUNT_MODEL.a:.3f} b={PUBLISHED_COUNT_MODEL.b:.3f}")
    if gap > GD_AGREEMENT_TOL * max(1.0, abs(ols.a), abs(ols.b)):
        print(f"warning: gradient descent has not converged to the closed-form solution "
              f"(gap {gap:.2e}); increase epochs", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def _parse_numbers(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--{what} must be a comma-separated list of numbers") from exc


def _load_count_model(source: str) -> LinearModel:
    if source == "published":
        return PUBLISHED_COUNT_MODEL
    model, _ = load_model(source)
    return model


def cmd_predict_yield(args, cfg: RunConfig) -> int:
    model = _load_count_model(args.model)
    if (args.records is None) == (args.counts is None):
        raise UsageError("give exactly one of --records or --counts")
    if args.records is not None:
        records = load_tree_records(args.records)
    else:
        counts = _parse_numbers(args.counts, "counts")
        truth = _parse_numbers(args.truth, "truth") if args.truth else []
        if truth and len(truth) != len(counts):
            raise UsageError("--truth must have one value per count")
        if any(c < 0 for c in counts):
            raise UsageError("counts must be non-negative")
        records = [
            TreeRecord(str(i), c, truth[i - 1] if truth else None) for i, c in enumerate(counts, start=1)
        ]
    weight = args.fruit_weight if args.fruit_weight is not None else cfg.mean_fruit_weight
    if not weight > 0:
        raise UsageError("--fruit-weight must be positive")
    summary = report.summarize_yield(records, YieldModel(model, weight))
    out = _out_dir(cfg)
    report.write_yield_csv(out / "yield.csv", summary)
    print(f"model: a={model.a} b={model.b}; mean fruit weight {weight} kg")
    print(f"trees={len(records)} detected={summary.total_detected:g} "
          f"corrected={summary.total_corrected:.3f} yield={summary.total_yield:.3f} kg")
    if summary.aggregate_relative_error is not None:
        print(f"ground truth total={summary.total_truth:g} "
              f"aggregate relative error={summary.aggregate_relative_error:.4%} "
              f"mean per-tree relative error={summary.mean_relative_error:.4%}")
    if summary.yield_aggregate_relative_error is not None:
        print(f"yield aggregate relative error={summary.yield_aggregate_relative_error:.4%}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_distill_demo(args, cfg: RunConfig) -> int:
    demo = cfg.distill
    overrides = {k: v for k, v in (
        ("temperature", args.temperature), ("epochs", args.epochs), ("learning_rate", args.lr),
        ("lambda_hard", args.lambda_hard), ("lambda_soft", args.lambda_soft),
    ) if v is not None}
    if overrides:
        try:
            demo = replace(demo, distill=replace(demo.distill, **overrides))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    result = run_demo(demo)
    d = demo.distill
    mode = "plain supervised" if d.lambda_soft == 0 else "distillation"
    out = _out_dir(cfg)
    dh, bh = result.distilled.history, result.baseline.history
    save_distill_run(out / "distill_run.json", {
        "mode": mode,
        "config": {**asdict(d), "teacher_hidden": list(demo.teacher_hidden),
                   "student_hidden": list(demo.student_hidden),
                   "samples_per_class": demo.samples_per_class,
                   "teacher_epochs": demo.teacher_epochs,
                   "teacher_learning_rate": demo.teacher_learning_rate},
        "histories": {"student": dh.to_dict(), "baseline": bh.to_dict(),
                      "teacher": result.teacher_history.to_dict()},
        "accuracy": {"teacher": result.teacher_accuracy, "student": result.distilled_accuracy,
                     "baseline": result.baseline_accuracy},
        "networks": {"teacher": net_to_dict(result.teacher),
                     "student": net_to_dict(result.distilled.student)},
    })
    report.write_history_csv(out / "distill_history.csv", {
        "student_total": dh.total, "student_hard": dh.hard, "student_soft": dh.soft,
        "baseline_total": bh.total, "baseline_hard": bh.hard,
    })
    report.write_rows(out / "distill_summary.csv",
                  ("run", "mode", "epochs", "initial_total", "final_total", "final_hard",
                   "initial_soft", "final_soft", "accuracy"),
                  [("student", mode, d.epochs, dh.total[0], dh.total[-1], dh.hard[-1],
                    dh.soft[0], dh.soft[-1], result.distilled_accuracy),
                   ("baseline", "plain supervised", d.epochs, bh.total[0], bh.total[-1], bh.hard[-1],
                    None, None, result.baseline_accuracy)])
    epochs = list(range(len(dh.total)))
    plot = svg.line_chart(
        [svg.Series("student total", epochs, dh.total), svg.Series("student soft", epochs, dh.soft),
         svg.Series("baseline total", epochs, bh.total)],
        title=f"Distillation losses (T={d.temperature:g})", x_label="epoch", y_label="loss",
    )
    (out / "distill_loss.svg").write_text(plot, encoding="utf-8")
    print(f"mode={mode} T={d.temperature:g} epochs={d.epochs} seed={d.seed}")
    print(f"student: total {dh.total[0]:.6f} -> {dh.total[-1]:.6f}, soft {dh.soft[0]:.6f} -> {dh.soft[-1]:.6f}")
    print(f"baseline: total {bh.total[0]:.6f} -> {bh.total[-1]:.6f}")
    print(f"accuracy teacher={result.teacher_accuracy:.3f} student={result.distilled_accuracy:.3f} "
          f"baseline={result.baseline_accuracy:.3f}")
    print(f"wrote {out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--conf", type=float, default=None, help=f"confidence threshold (default {DEFAULT_CONF_THRESHOLD})")
    p.add_argument("--iou", type=float, default=None, help=f"IoU threshold (default {DEFAULT_IOU_THRESHOLD})")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    p.add_argument("--out-dir", default=None, help="output directory (default ./out)")
    p.add_argument("--config", default=None, help="JSON run configuration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orchard-yield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate detection scenes against ground truth")
    _common(p)
    p.add_argument("scenes", nargs="*", help="scene JSON files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit", help="fit the count-correction line to tree records")
    _common(p)
    p.add_argument("records", help="CSV with tree_no,estimated,ground_truth")
    p.add_argument("--lr", type=float, default=None, help="gradient descent learning rate")
    p.add_argument("--epochs", type=int, default=None, help="gradient descent epochs")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict-yield", help="apply a count-correction model and estimate yield")
    _common(p)
    p.add_argument("--model", required=True, help="model JSON written by 'fit', or 'published'")
    p.add_argument("--records", default=None, help="tree records CSV (ground_truth optional)")
    p.add_argument("--counts", default=None, help="comma-separated detected counts")
    p.add_argument("--truth", default=None, help="comma-separated true counts for --counts")
    p.add_argument("--fruit-weight", type=float, default=None, help="mean fruit weight in kg")
    p.set_defaults(func=cmd_predict_yield)

    p = sub.add_parser("distill-demo", help="seeded toy teacher/student distillation run")
    _common(p)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda-hard", type=float, default=None)
    p.add_argument("--lambda-soft", type=float, default=None)
    p.set_defaults(func=cmd_distill_demo)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("ORCHARD_YIELD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateDataError, DivergenceError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
