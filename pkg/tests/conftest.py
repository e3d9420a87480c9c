import math

import numpy as np
import pytest

from wecfarm.core import FarmGeometry
from wecfarm.hydro import SpectralComponent, WaveScenario, load_scenario


@pytest.fixture(scope="session")
def perth():
    return load_scenario("perth-like")


@pytest.fixture
def geometry():
    return FarmGeometry(n=16)


@pytest.fixture(scope="session")
def mono_scenario():
    """One frequency, one direction: easy to reason about by hand."""
    return WaveScenario("mono", (SpectralComponent(0.7, 1.0, math.radians(30.0), 1.0),))


def random_feasible_layout(rng, n, geometry, attempts=10_000):
    pts = []
    side = geometry.side
    for _ in range(attempts):
        if len(pts) == n:
            break
        p = rng.uniform(0, side, 2)
        if all(math.dist(p, q) >= geometry.min_distance for q in pts):
            pts.append(p)
    assert len(pts) == n
    return np.array(pts)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
