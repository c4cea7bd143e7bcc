import numpy as np
import pytest

from mpnehari.grid import build_grid
from mpnehari.presets import preset_exponent_set
from mpnehari.spaces import ExponentSet


@pytest.fixture(scope="session")
def preset33():
    return preset_exponent_set(33)


@pytest.fixture(scope="session")
def preset17():
    return preset_exponent_set(17)


@pytest.fixture(scope="session")
def bump33(preset33):
    g = preset33.grid
    return g.restrict(np.clip(1 - g.radius ** 2, 0, None))


@pytest.fixture(scope="session")
def unit_square():
    return build_grid(2, 21, (0.0, 1.0))


def constant_set(grid, **values):
    return ExponentSet.constant(grid, **values)


ACCEPTANCE_LINES = []


def record_acceptance(label, ok, detail=""):
    """Remember a one-line verdict for the terminal summary and echo it."""
    line = f"ACCEPTANCE {label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
