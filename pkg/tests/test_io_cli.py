import csv
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SURVEY_PRINTED_PERCENT
from orchard_yield.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from orchard_yield.geometry import BBox, GroundTruthBox
from orchard_yield.io import (
    DataError,
    data_path,
    load_model,
    load_scene,
    parse_annotation_text,
    parse_annotations,
    render_annotations,
    save_model,
)
from orchard_yield.regress import LinearModel, predict

GOLDEN = Path(__file__).parent / "golden" / "distill_demo_seed0.json"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv, out=None):
    args = list(map(str, argv))
    if out is not None:
        args += ["--out-dir", str(out)]
    return main(args)


class TestAnnotations:
    def test_full_frame(self):
        (g,) = parse_annotation_text("0 0.5 0.5 1.0 1.0\n", 100, 100)
        assert g.box == BBox(0, 0, 100, 100) and g.class_id == 0

    def test_camera_resolution(self):
        (g,) = parse_annotation_text("0 0.25 0.25 0.5 0.5", 4000, 3000)
        assert g.box == BBox(0, 0, 2000, 1500)

    def test_empty_and_comments(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("")
        assert parse_annotations(p, 10, 10) == []
        assert parse_annotation_text("# header\n\n", 10, 10) == []

    def test_malformed_lines_reported(self):
        text = "0 0.5 0.5 0.1 0.1\n0 0.5 0.5\n1 a 0.5 0.1 0.1\n0 0.5 0.5 1.5 0.1\n"
        with pytest.raises(DataError) as err:
            parse_annotation_text(text, 10, 10, source="lbl.txt")
        assert err.value.lines == [2, 3, 4]
        assert str(err.value).startswith("lbl.txt:2,3,4:")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataError, match="missing.txt"):
            parse_annotations(tmp_path / "missing.txt", 10, 10)

    def test_out_of_image_box_warns(self, caplog):
        gts = parse_annotation_text("0 0.9 0.5 0.4 0.2", 100, 100)
        assert len(gts) == 1
        assert "outside" in caplog.text

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 1), st.floats(0, 1),
                              st.floats(0, 1), st.floats(0, 1)), max_size=10),
           st.integers(1, 5000), st.integers(1, 5000))
    def test_render_parse_round_trip(self, rows, w, h):
        gts = []
        for cls, x0, y0, x1, y1 in rows:
            xa, xb = sorted((x0 * w, x1 * w))
            ya, yb = sorted((y0 * h, y1 * h))
            gts.append(GroundTruthBox(BBox(xa, ya, xb, yb), cls))
        back = parse_annotation_text(render_annotations(gts, w, h), w, h)
        assert len(back) == len(gts)
        for a, b in zip(gts, back):
            assert a.class_id == b.class_id
            assert b.box.as_tuple() == pytest.approx(a.box.as_tuple(), abs=1e-9 * max(w, h))


class TestScenes:
    def test_inline_and_file_ground_truth(self, scene_paths):
        s1, s2, _ = (load_scene(p) for p in scene_paths)
        assert len(s1.ground_truth) == 2 and s1.tree == "1"
        assert len(s2.ground_truth) == 3 and len(s2.detections) == 4

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{\n  nope")
        with pytest.raises(DataError, match="bad.json"):
            load_scene(p)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        m = LinearModel(1.0700511695906433, -23.48611111111111)
        save_model(tmp_path / "m.json", m, note="x")
        back, doc = load_model(tmp_path / "m.json")
        assert back == m and doc["note"] == "x" and doc["schema_version"] == 1

    @pytest.mark.parametrize("body", ['{"kind": "linear_model", "a": 1, "b": 0}',
                                      '{"schema_version": 1, "kind": "distill_run"}',
                                      '{"schema_version": 1, "kind": "linear_model", "a": 1}', "[1,"])
    def test_rejects_corrupt(self, tmp_path, body):
        p = tmp_path / "m.json"
        p.write_text(body)
        with pytest.raises(DataError):
            load_model(p)


class TestEvalCommand:
    def test_fixture_goldens(self, scene_paths, tmp_path):
        assert run("eval", *scene_paths, out=tmp_path) == EXIT_OK
        rows = {(r["scope"], r["scene_id"]): r for r in read_csv(tmp_path / "eval_metrics.csv")}
        expect = {"s1": (2, 0, 0, 1.0), "s2": (2, 1, 1, 5 / 9), "s3": (2, 1, 0, 5 / 6)}
        for sid, (tp, fp, fn, ap) in expect.items():
            r = rows[("scene", sid)]
            assert (int(r["tp"]), int(r["fp"]), int(r["fn"])) == (tp, fp, fn)
            assert float(r["ap"]) == pytest.approx(ap, abs=1e-12)
        micro, macro = rows[("aggregate_micro", "*")], rows[("aggregate_macro", "*")]
        assert float(micro["precision"]) == pytest.approx(6 / 8)
        assert float(micro["recall"]) == pytest.approx(6 / 7)
        assert float(macro["precision"]) == pytest.approx(7 / 9)
        assert float(macro["recall"]) == pytest.approx(8 / 9)
        assert float(macro["ap"]) == pytest.approx(43 / 54)
        trees = {r["tree_no"]: r for r in read_csv(tmp_path / "tree_counts.csv")}
        assert (trees["1"]["estimated"], trees["1"]["ground_truth"]) == ("4", "5")
        assert (trees["2"]["estimated"], trees["2"]["ground_truth"]) == ("3", "2")
        for sid in expect:
            assert (tmp_path / f"pr_{sid}.csv").exists()
            ET.parse(tmp_path / f"pr_{sid}.svg")

    def test_perfect_scene(self, scene_paths, tmp_path):
        assert run("eval", scene_paths[0], out=tmp_path) == EXIT_OK
        for r in read_csv(tmp_path / "eval_metrics.csv"):
            assert float(r["precision"]) == float(r["recall"]) == 1.0
            if r["ap"]:
                assert float(r["ap"]) == 1.0

    def test_missing_labels_file(self, tmp_path, capsys):
        scene = tmp_path / "x.json"
        scene.write_text(json.dumps({"image_id": "x", "width": 10, "height": 10, "detections": []}))
        assert run("eval", scene, out=tmp_path / "o") == EXIT_DATA
        assert str(tmp_path / "x.txt") in capsys.readouterr().err

    def test_no_scenes(self, tmp_path):
        assert run("eval", out=tmp_path) == EXIT_USAGE

    def test_bad_threshold(self, scene_paths, tmp_path):
        assert run("eval", scene_paths[0], "--conf", "1.5", out=tmp_path) == EXIT_USAGE

    def test_deterministic_outputs(self, scene_paths, tmp_path):
        run("eval", *scene_paths, out=tmp_path / "a")
        run("eval", *scene_paths, out=tmp_path / "b")
        for name in ("eval_metrics.csv", "tree_counts.csv", "pr_s2.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert svg_structure(tmp_path / "a" / "pr_s2.svg") == svg_structure(tmp_path / "b" / "pr_s2.svg")


def svg_structure(path):
    root = ET.parse(path).getroot()
    return [(el.tag, el.get("class"), el.text) for el in root.iter()]


class TestFitCommand:
    def test_survey_relative_errors(self, tmp_path, capsys):
        assert run("fit", data_path("tree_survey.csv"), out=tmp_path) == EXIT_OK
        rows = read_csv(tmp_path / "residuals.csv")
        got = [round(100 * float(r["relative_error_detection"]), 1) for r in rows]
        assert got == pytest.approx(SURVEY_PRINTED_PERCENT, abs=0.1 + 1e-9)
        printed = capsys.readouterr().out
        assert "published:" in printed and "0.998" in printed and "-15.101" in printed
        assert "warning" not in printed

    def test_model_round_trip(self, tmp_path):
        run("fit", data_path("tree_survey.csv"), out=tmp_path)
        model, _ = load_model(tmp_path / "model.json")
        for r in read_csv(tmp_path / "residuals.csv"):
            assert predict(model, float(r["estimated"])) == float(r["fitted"])

    def test_two_point_exact_line(self, tmp_path):
        p = tmp_path / "two.csv"
        p.write_text("tree_no,estimated,ground_truth\na,10,20\nb,30,60\n")
        assert run("fit", p, "--lr", "0.1", "--epochs", "5000", out=tmp_path) == EXIT_OK
        for r in read_csv(tmp_path / "residuals.csv"):
            assert abs(float(r["residual"])) < 1e-6

    def test_constant_x(self, tmp_path, capsys):
        p = tmp_path / "flat.csv"
        p.write_text("tree_no,estimated,ground_truth\na,10,20\nb,10,30\n")
        assert run("fit", p, out=tmp_path) == EXIT_DATA
        assert "zero variance" in capsys.readouterr().err

    def test_deterministic_outputs(self, tmp_path):
        for d in "ab":
            run("fit", data_path("tree_survey.csv"), "--epochs", "2000", out=tmp_path / d)
        for name in ("residuals.csv", "fit_history.csv", "model.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert svg_structure(tmp_path / "a" / "fit.svg") == svg_structure(tmp_path / "b" / "fit.svg")


class TestPredictYieldCommand:
    def test_published_model_on_table2(self, tmp_path, tree_survey):
        assert run("predict-yield", "--model", "published", "--records", data_path("tree_survey.csv"),
                   out=tmp_path) == EXIT_OK
        rows = {r["tree_no"]: r for r in read_csv(tmp_path / "yield.csv")}
        expected_total = sum(max(0.0, 0.998 * r.estimated - 15.101) for r in tree_survey)
        assert float(rows["TOTAL"]["corrected"]) == pytest.approx(expected_total, abs=1e-9)
        assert float(rows["TOTAL"]["ground_truth"]) == 1970

    def test_identity_model(self, tmp_path):
        save_model(tmp_path / "id.json", LinearModel(1, 0))
        assert run("predict-yield", "--model", tmp_path / "id.json", "--counts", "10", "--truth", "10",
                   out=tmp_path) == EXIT_OK
        rows = {r["tree_no"]: r for r in read_csv(tmp_path / "yield.csv")}
        assert float(rows["TOTAL"]["count_relative_error"]) == 0.0

    @pytest.mark.parametrize("b,expected", [(7.5, 7.5), (-3.0, 0.0)])
    def test_constant_model(self, tmp_path, b, expected):
        save_model(tmp_path / "c.json", LinearModel(0, b))
        run("predict-yield", "--model", tmp_path / "c.json", "--counts", "1,50,200", out=tmp_path)
        rows = read_csv(tmp_path / "yield.csv")
        assert [float(r["corrected"]) for r in rows if r["tree_no"] not in ("TOTAL", "MEAN_RELATIVE_ERROR")] \
            == [expected] * 3

    def test_missing_model(self, tmp_path):
        assert run("predict-yield", "--model", tmp_path / "nope.json", "--counts", "1", out=tmp_path) == EXIT_DATA

    def test_corrupt_model(self, tmp_path):
        (tmp_path / "m.json").write_text("{}")
        assert run("predict-yield", "--model", tmp_path / "m.json", "--counts", "1", out=tmp_path) == EXIT_DATA

    def test_needs_exactly_one_source(self, tmp_path):
        assert run("predict-yield", "--model", "published", out=tmp_path) == EXIT_USAGE


class TestDistillDemoCommand:
    def test_default_matches_golden(self, tmp_path):
        assert run("distill-demo", out=tmp_path) == EXIT_OK
        golden = json.loads(GOLDEN.read_text())
        doc = json.loads((tmp_path / "distill_run.json").read_text())
        assert doc["mode"] == "distillation"
        assert doc["histories"]["student"] == golden["student"]
        assert doc["histories"]["baseline"] == golden["baseline"]
        ET.parse(tmp_path / "distill_loss.svg")

    def test_plain_supervised(self, tmp_path):
        assert run("distill-demo", "--lambda-soft", "0", "--epochs", "5", out=tmp_path) == EXIT_OK
        assert json.loads((tmp_path / "distill_run.json").read_text())["mode"] == "plain supervised"

    def test_zero_epochs(self, tmp_path):
        assert run("distill-demo", "--epochs", "0", out=tmp_path) == EXIT_OK
        rows = read_csv(tmp_path / "distill_history.csv")
        assert len(rows) == 1 and rows[0]["epoch"] == "0"

    @pytest.mark.parametrize("flags", [["--temperature", "0"], ["--epochs", "-1"],
                                       ["--lambda-hard", "0", "--lambda-soft", "0"]])
    def test_invalid_config(self, tmp_path, flags):
        assert run("distill-demo", *flags, out=tmp_path) == EXIT_USAGE

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 3, "distill": {"epochs": 2, "temperature": 5}}))
        assert run("distill-demo", "--config", cfg, out=tmp_path) == EXIT_OK
        doc = json.loads((tmp_path / "distill_run.json").read_text())
        assert doc["config"]["seed"] == 3 and doc["config"]["temperature"] == 5
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("distill-demo", "--config", cfg, out=tmp_path) == EXIT_USAGE

    def test_deterministic_outputs(self, tmp_path):
        for d in "ab":
            run("distill-demo", "--epochs", "20", out=tmp_path / d)
        for name in ("distill_history.csv", "distill_summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert svg_structure(tmp_path / "a" / "distill_loss.svg") == svg_structure(tmp_path / "b" / "distill_loss.svg")


def test_usage_errors():
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == EXIT_USAGE


def test_log_level_env(monkeypatch, tmp_path, scene_paths):
    monkeypatch.setenv("ORCHARD_YIELD_LOG", "DEBUG")
    assert run("eval", scene_paths[0], out=tmp_path) == EXIT_OK
    # Unknown level names fall back to warnings only.
    monkeypatch.setenv("ORCHARD_YIELD_LOG", "loud")
    assert run("eval", scene_paths[0], out=tmp_path) == EXIT_OK
