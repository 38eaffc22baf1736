import numpy as np
import pytest

from cumeval.raster import GridSpec, LabelMask, RasterGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def grid_spec(width=16, height=16, cell=0.5, origin=(0.0, None)):
    ox, oy = origin
    if oy is None:
        oy = height * cell
    return GridSpec(width, height, ox, oy, cell)


def mask_from(spec, positive, valid=None):
    return LabelMask.from_bool(spec, positive, valid)


def dsm_from(spec, values):
    return RasterGrid.from_masked(spec, np.asarray(values, dtype=float))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
