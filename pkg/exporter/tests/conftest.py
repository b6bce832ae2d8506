"""Shared fixtures: a tiny on-disk image dataset and one reusable export.

Tests marked ``@pytest.mark.acceptance(name=...)`` are the gate; the
terminal summary prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from edgevad_exporter import export, get_profile

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


def block_image(seed: int, side: int = 96) -> np.ndarray:
    """A blocky RGB test card; compresses well and resizes predictably."""
    cells = np.random.default_rng(seed).integers(
        0, 255, size=(6, 6, 3), dtype=np.uint8
    )
    scale = side // 6
    return np.kron(cells, np.ones((scale, scale, 1), dtype=np.uint8))


def save_png(path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def build_image_tree(root) -> None:
    """One 'widget' category: 2 train good, 1 test good, 1 test scratch."""
    for i in range(2):
        save_png(root / "widget/train/good" / f"{i:03d}.png", block_image(i))
    save_png(root / "widget/test/good/000.png", block_image(10))
    defect = block_image(11)
    defect[20:60, 30:80] = (255, 0, 0)
    save_png(root / "widget/test/scratch/000.png", defect)
    mask = np.zeros((96, 96), dtype=np.uint8)
    mask[20:60, 30:80] = 255
    save_png(root / "widget/ground_truth/scratch/000_mask.png", mask)


@pytest.fixture(scope="session")
def image_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    build_image_tree(root)
    return root


@pytest.fixture(scope="session")
def exported(image_tree, tmp_path_factory):
    """One mobilenet_v2 export with seeded random weights, reused widely."""
    out = tmp_path_factory.mktemp("export")
    manifest = export(
        image_tree, get_profile("mobilenet_v2"), out, weights="random", seed=0
    )
    return out, manifest
