import numpy as np
import pytest

from sfdemc.core import build_grid
from sfdemc.models import DelayedBS, Lifted2D

TANH = "tanh:0.2,0.05,100"


@pytest.fixture
def tanh_model():
    return DelayedBS(TANH, 100.0)


@pytest.fixture
def lifted_model():
    return Lifted2D(TANH, 100.0)


@pytest.fixture
def grid_1_2():
    return build_grid(1.0, 2.0, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
