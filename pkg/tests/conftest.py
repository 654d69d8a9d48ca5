import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from orchard_yield.geometry import BBox, Detection, GroundTruthBox  # noqa: E402
from orchard_yield.io import data_path, load_tree_records  # noqa: E402

# Published per-tree relative detection errors for the survey fixture, in percent.
SURVEY_PRINTED_PERCENT = [
    41.5, 85.0, 46.0, 34.3, 21.0, 21.4, 16.7, 15.4, 8.0, 7.0,
    21.6, 17.0, 22.3, 19.3, 4.1, 3.7, 4.4, 0.0, 15.7, 13.0,
]


@pytest.fixture(scope="session")
def tree_survey():
    return load_tree_records(data_path("tree_survey.csv"), require_truth=True)


@pytest.fixture(scope="session")
def scene_paths():
    return [data_path(f"scenes/s{i}.json") for i in (1, 2, 3)]


def random_int_box(rng: np.random.Generator, size: int = 20, max_side: int = 10):
    x0, y0 = rng.integers(0, size, 2)
    w, h = rng.integers(0, max_side + 1, 2)
    return (int(x0), int(y0), int(x0 + w), int(y0 + h))


def as_bbox(t) -> BBox:
    return BBox(*map(float, t))


def make_dets(boxes, classes, confs):
    return [Detection(as_bbox(b), c, p) for b, c, p in zip(boxes, classes, confs)]


def make_gts(boxes, classes):
    return [GroundTruthBox(as_bbox(b), c) for b, c in zip(boxes, classes)]


# One line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
