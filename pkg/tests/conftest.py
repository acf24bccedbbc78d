"""Session-wide setup: warm the jitted raster kernel before any timed test."""

import sys

import numpy as np
import pytest

from labelfuse4d.rasterizer import rasterize
from labelfuse4d.scene_io import TriMesh, build_rig


@pytest.fixture(scope="session", autouse=True)
def _warm_raster_kernel():
    mesh = TriMesh(
        np.array([[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.0, 0.4, 0.0]]),
        np.array([[0, 1, 2]], dtype=np.int32),
    )
    rig = build_rig(np.zeros(3), 3.0, image_size=64)
    rasterize(mesh, rig.cameras[0])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance checklist after the run, past output capture."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance checklist")
        for line in lines:
            terminalreporter.write_line(line)
