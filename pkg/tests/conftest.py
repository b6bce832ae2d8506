"""Shared fixtures and the acceptance-criterion terminal summary.

Tests marked ``@pytest.mark.acceptance(name=...)`` are the gate: the
terminal summary prints one PASS/FAIL line per criterion so the gate
status is readable without scrolling through the full pytest output.
"""

from __future__ import annotations

import numpy as np
import pytest

from edgevad.model import FeatureStack, FeatureTensor, PatchFeature, PatchGrid

_ACCEPTANCE_RESULTS: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    marker_name = report.user_properties and dict(report.user_properties).get(
        "acceptance"
    )
    if marker_name:
        _ACCEPTANCE_RESULTS[marker_name] = report.outcome


@pytest.fixture(autouse=True)
def _record_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker:
        name = marker.kwargs.get("name") or marker.args[0]
        request.node.user_properties.append(("acceptance", name))
    yield


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    status_names = {"passed": "PASS", "skipped": "SKIP"}
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        status = status_names.get(_ACCEPTANCE_RESULTS[name], "FAIL")
        terminalreporter.write_line(f"{status}  {name}")


# ---------------------------------------------------------------------------
# Small builders used across test modules


def make_grid(matrix: np.ndarray, rows: int, cols: int) -> PatchGrid:
    """Full grid from an (rows*cols, d) matrix in row-major order."""
    matrix = np.asarray(matrix, dtype=np.float32)
    patches = tuple(
        PatchFeature(vector=matrix[i], grid_row=i // cols, grid_col=i % cols)
        for i in range(rows * cols)
    )
    return PatchGrid(patches=patches, rows=rows, cols=cols, d=matrix.shape[1])


def make_stack(arrays, image_id: str = "img", label: str = "normal",
               category: str = "cat", mask=None) -> FeatureStack:
    """FeatureStack from a list of (C, H, W) arrays, layer indices 1..L."""
    layers = tuple(
        FeatureTensor.from_array(np.asarray(a, dtype=np.float32), layer_index=i + 1)
        for i, a in enumerate(arrays)
    )
    return FeatureStack(
        image_id=image_id, layers=layers, label=label, category=category, mask=mask
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
