import numpy as np
import pytest

from mcainterp.grids import fliege_grid, lebedev_grid
from mcainterp.sphere import HeadModel, synth_sphere_hrirs

FS = 44100.0
IR_LEN = 512


@pytest.fixture(scope="session")
def head():
    return HeadModel(0.0875)


@pytest.fixture(scope="session")
def sparse_sphere(head):
    return synth_sphere_hrirs(head, lebedev_grid(3), IR_LEN, FS)


@pytest.fixture(scope="session")
def dense_grid():
    return fliege_grid(900)


@pytest.fixture(scope="session")
def dense_sphere(head, dense_grid):
    return synth_sphere_hrirs(head, dense_grid, IR_LEN, FS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(RESULTS):
        ok, detail = RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
