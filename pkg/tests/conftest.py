import numpy as np
import pytest
import torch

from layoutdiff.core import BBox, Component, DatasetSchema, Layout
from layoutdiff.schedule import build_cosine_schedule

torch.set_num_threads(1)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def schedule100():
    return build_cosine_schedule(100)


@pytest.fixture(scope="session")
def doc_schema():
    return DatasetSchema(name="synthdoc", classes=("text", "title", "figure", "list", "table"))


def make_layout(schema, spec, canvas=(800, 1000)):
    """spec: list of (class_name, cx, cy, w, h)."""
    comps = [
        Component(schema.label(name), BBox(cx, cy, w, h)) for name, cx, cy, w, h in spec
    ]
    return Layout(components=comps, canvas_w=canvas[0], canvas_h=canvas[1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
