"""File formats: annotation text, detection scenes, tree records and model JSON.

Annotation lines are ``class cx cy w h`` with the four geometry fields
normalised to [0, 1] by image width/height. Blank lines and ``#`` comments are
ignored.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .geometry import BBox, Detection, GroundTruthBox
from .regress import LinearModel

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def data_path(name: str) -> Path:
    """Path of a bundled fixture under ``orchard_yield/data`` (e.g. ``"tree_survey.csv"``)."""
    return Path(str(resources.files("orchard_yield") / "data" / name))


class DataError(Exception):
    """Malformed or unreadable input data; ``str()`` names the file and line(s)."""

    def __init__(self, path, message: str, lines: Sequence[int] = ()):
        self.path = str(path)
        self.lines = list(lines)
        where = self.path
        if self.lines:
            where += ":" + ",".join(str(n) for n in self.lines)
        super().__init__(f"{where}: {message}")


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(path, f"cannot read file ({exc.strerror or exc})") from exc


def parse_annotation_text(text: str, width: float, height: float, source: str = "<string>") -> list[GroundTruthBox]:
    boxes: list[GroundTruthBox] = []
    errors: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            errors.append((lineno, f"expected 5 fields, got {len(fields)}"))
            continue
        try:
            cls = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError:
            errors.append((lineno, "non-numeric field"))
            continue
        if cls < 0:
            errors.append((lineno, "negative class id"))
            continue
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            errors.append((lineno, "normalised fields must lie in [0, 1]"))
            continue
        box = BBox.from_cxcywh(cx * width, cy * height, w * width, h * height)
        if box.x_min < 0 or box.y_min < 0 or box.x_max > width or box.y_max > height:
            log.warning("%s:%d: box extends outside the %gx%g image", source, lineno, width, height)
        boxes.append(GroundTruthBox(box, cls))
    if errors:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in errors)
        raise DataError(source, f"malformed annotation ({detail})", [n for n, _ in errors])
    return boxes


def parse_annotations(path, width: float, height: float) -> list[GroundTruthBox]:
    """Read a normalised ``class cx cy w h`` label file into pixel-space boxes."""
    return parse_annotation_text(_read_text(path), width, height, source=str(path))


def render_annotations(gts: Iterable[GroundTruthBox], width: float, height: float) -> str:
    lines = []
    for g in gts:
        b = g.box
        cx = (b.x_min + b.x_max) / 2 / width
        cy = (b.y_min + b.y_max) / 2 / height
        lines.append(f"{g.class_id} {cx!r} {cy!r} {b.width / width!r} {b.height / height!r}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class SceneFile:
    image_id: str
    width: float
    height: float
    ground_truth: list[GroundTruthBox] = field(default_factory=list)
    detections: list[Detection] = field(default_factory=list)
    tree_id: Optional[str] = None

    @property
    def tree(self) -> str:
        return self.tree_id if self.tree_id is not None else self.image_id


def _parse_detection(item: Any, path, index: int) -> Detection:
    try:
        box = BBox(*(float(v) for v in item["box"]))
        return Detection(box, int(item.get("class_id", 0)), float(item["confidence"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(path, f"detection #{index} is invalid ({exc})") from exc


def load_scene(path) -> SceneFile:
    """Load a detections JSON scene.

    Ground truth comes from an inline ``ground_truth`` list of ``{"box",
    "class_id"}`` records or from the annotation file named by ``labels``
    (relative to the JSON file, default ``<image_id>.txt``).
    """
    path = Path(path)
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataError(path, f"invalid JSON ({exc.msg})", [exc.lineno]) from exc
    try:
        image_id = str(doc["image_id"])
        width, height = float(doc["width"]), float(doc["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(path, f"scene needs image_id, width and height ({exc})") from exc
    if not (width > 0 and height > 0):
        raise DataError(path, "image width and height must be positive")
    dets = [_parse_detection(d, path, i) for i, d in enumerate(doc.get("detections", []))]
    if "ground_truth" in doc:
        try:
            gts = [
                GroundTruthBox(BBox(*(float(v) for v in g["box"])), int(g.get("class_id", 0)))
                for g in doc["ground_truth"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(path, f"invalid ground_truth entry ({exc})") from exc
    else:
        labels = path.parent / doc.get("labels", f"{image_id}.txt")
        gts = parse_annotations(labels, width, height)
    tree_id = doc.get("tree_id")
    return SceneFile(image_id, width, height, gts, dets, None if tree_id is None else str(tree_id))


def scene_to_dict(scene: SceneFile) -> dict:
    doc: dict[str, Any] = {"image_id": scene.image_id, "width": scene.width, "height": scene.height}
    if scene.tree_id is not None:
        doc["tree_id"] = scene.tree_id
    doc["detections"] = [
        {"box": list(d.box.as_tuple()), "class_id": d.class_id, "confidence": d.confidence}
        for d in scene.detections
    ]
    doc["ground_truth"] = [{"box": list(g.box.as_tuple()), "class_id": g.class_id} for g in scene.ground_truth]
    return doc


@dataclass
class TreeRecord:
    tree_no: str
    estimated: float
    ground_truth: Optional[float] = None
    yield_kg: Optional[float] = None

    def __post_init__(self) -> None:
        if self.estimated < 0 or (self.ground_truth is not None and self.ground_truth < 0):
            raise ValueError("counts must be non-negative")


def _opt_float(value: Optional[str]) -> Optional[float]:
    if value is None or value.strip() == "":
        return None
    return float(value)


def load_tree_records(path, require_truth: bool = False) -> list[TreeRecord]:
    """Read a ``tree_no,estimated,ground_truth[,yield_kg]`` CSV."""
    text = _read_text(path)
    reader = csv.DictReader(text.splitlines())
    fields = reader.fieldnames or []
    needed = ["tree_no", "estimated"] + (["ground_truth"] if require_truth else [])
    missing = [c for c in needed if c not in fields]
    if missing:
        raise DataError(path, f"missing column(s): {', '.join(missing)}", [1])
    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rec = TreeRecord(
                tree_no=row["tree_no"].strip(),
                estimated=float(row["estimated"]),
                ground_truth=_opt_float(row.get("ground_truth")),
                yield_kg=_opt_float(row.get("yield_kg")),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise DataError(path, f"bad record ({exc})", [lineno]) from exc
        if require_truth and rec.ground_truth is None:
            raise DataError(path, "ground_truth is required", [lineno])
        records.append(rec)
    return records


def write_tree_records(path, records: Sequence[TreeRecord]) -> None:
    with_yield = any(r.yield_kg is not None for r in records)
    cols = ["tree_no", "estimated", "ground_truth"] + (["yield_kg"] if with_yield else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            row = [r.tree_no, _fmt(r.estimated), "" if r.ground_truth is None else _fmt(r.ground_truth)]
            if with_yield:
                row.append("" if r.yield_kg is None else _fmt(r.yield_kg))
            w.writerow(row)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _dump(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_versioned(path, kind: str) -> dict:
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataError(path, f"invalid JSON ({exc.msg})", [exc.lineno]) from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(path, f"unsupported or missing schema_version (expected {SCHEMA_VERSION})")
    if doc.get("kind") != kind:
        raise DataError(path, f"expected a {kind!r} document, got {doc.get('kind')!r}")
    return doc


def save_model(path, model: LinearModel, **extra: Any) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "linear_model", "a": model.a, "b": model.b}
    doc.update(extra)
    _dump(path, doc)


def load_model(path) -> tuple[LinearModel, dict]:
    doc = _load_versioned(path, "linear_model")
    try:
        return LinearModel(float(doc["a"]), float(doc["b"])), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(path, f"model coefficients missing or invalid ({exc})") from exc


def net_to_dict(net) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "seed": net.seed,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(doc: dict):
    from .distill.toynet import ToyNet

    return ToyNet(
        tuple(doc["layer_sizes"]),
        [np.array(w, dtype=float) for w in doc["weights"]],
        [np.array(b, dtype=float) for b in doc["biases"]],
        doc.get("seed"),
    )


def save_distill_run(path, doc: dict) -> None:
    _dump(path, {"schema_version": SCHEMA_VERSION, "kind": "distill_run", **doc})


def load_distill_run(path) -> dict:
    return _load_versioned(path, "distill_run")
