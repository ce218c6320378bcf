import numpy as np
import pytest

from nlelast.geometry import DomainMask, DoubleCone, Grid


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture
def box2d():
    """2D unit-square mask with a collar of 0.25 at h = 1/12."""
    grid = Grid.covering((0.0, 0.0), (1.0, 1.0), 1 / 12, 0.25)
    return DomainMask.box(grid, (0.0, 0.0), (1.0, 1.0))


def narrow_cone(angle=0.5):
    return DoubleCone.single((1.0, 0.0), angle)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
        store[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
