import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wecfarm.core import (
    FarmGeometry,
    Layout,
    farm_side,
    in_bounds,
    load_layout,
    penalty,
    resample_until_feasible,
    save_layout,
    violation_sum,
)
from wecfarm.errors import InvalidArgument, PlacementFailure


def brute_violation(points, dmin=50.0):
    total = 0.0
    for (x1, y1), (x2, y2) in itertools.combinations(points, 2):
        d = math.sqrt((x1 - x2) ** 2 + (y1 - y2) ** 2)
        if d < dmin:
            total += dmin - d
    return total


@pytest.mark.parametrize("n, expected", [(16, 565.6854249492381), (1, 141.4213562373095), (4, 282.842712474619)])
def test_farm_side(n, expected):
    assert farm_side(n, 20000) == pytest.approx(expected, rel=1e-15)


def test_farm_side_rejects_zero_buoys():
    with pytest.raises(InvalidArgument):
        farm_side(0, 20000)


def test_geometry_side_is_derived():
    g = FarmGeometry(n=4, area_per_buoy=20000)
    assert g.side == farm_side(4, 20000)
    with pytest.raises(InvalidArgument):
        FarmGeometry(n=4, min_distance=0)


def test_violation_examples():
    assert violation_sum([(0, 0), (60, 0)]) == 0.0
    assert violation_sum([(0, 0), (40, 0)]) == pytest.approx(10.0)
    h = 45 * math.sqrt(3) / 2
    tri = [(0, 0), (45, 0), (22.5, h)]
    assert violation_sum(tri) == pytest.approx(brute_violation(tri)) == pytest.approx(15.0)
    assert violation_sum([]) == 0.0
    assert violation_sum([(1, 2)]) == 0.0


coords = st.floats(-200, 200, allow_nan=False)
point_lists = st.lists(st.tuples(coords, coords), min_size=0, max_size=9)


@given(point_lists)
def test_violation_matches_brute_force(points):
    assert violation_sum(points) == pytest.approx(brute_violation(points), abs=1e-9)


@given(point_lists, st.randoms(use_true_random=False))
def test_violation_permutation_invariant(points, rnd):
    shuffled = list(points)
    rnd.shuffle(shuffled)
    assert violation_sum(shuffled) == pytest.approx(violation_sum(points), abs=1e-9)


@given(point_lists, st.floats(0, 2 * math.pi), coords, coords)
def test_violation_rigid_motion_invariant(points, theta, tx, ty):
    c, s = math.cos(theta), math.sin(theta)
    moved = [(c * x - s * y + tx, s * x + c * y + ty) for x, y in points]
    assert violation_sum(moved) == pytest.approx(violation_sum(points), abs=1e-7)


def test_penalty_values():
    assert penalty(0) == 0.0
    assert penalty(1) == 1048576.0
    assert penalty(0.5) == pytest.approx(1.5**20) == pytest.approx(3325.2567, rel=1e-7)
    with pytest.raises(InvalidArgument):
        penalty(-1e-3)


def test_penalty_jump_at_zero():
    assert penalty(0.0) == 0.0
    assert penalty(1e-12) > 1.0


@given(st.floats(1e-9, 50), st.floats(1e-9, 50))
def test_penalty_strictly_increasing(a, b):
    if a < b and (b - a) > 1e-12 * b:
        assert penalty(a) < penalty(b)


def test_in_bounds_inclusive():
    g = FarmGeometry(16)
    side = g.side
    assert in_bounds((0, 0), g)
    assert not in_bounds((566, 10), g)
    assert in_bounds((side, side), g)
    assert in_bounds((side, 0), g)
    assert not in_bounds((-1e-9, 3), g)


def test_resample_first_sample():
    g = FarmGeometry(16)
    calls = []

    def sampler():
        calls.append(1)
        return (5.0, 5.0)

    assert resample_until_feasible(sampler, g, 10) == (5.0, 5.0)
    assert len(calls) == 1


def test_resample_alternating():
    g = FarmGeometry(16)
    seq = iter([(-1.0, 0.0), (3.0, 4.0), (-1.0, 0.0)])
    consumed = []

    def sampler():
        p = next(seq)
        consumed.append(p)
        return p

    assert resample_until_feasible(sampler, g, 10) == (3.0, 4.0)
    assert len(consumed) == 2


def test_resample_exhaustion():
    g = FarmGeometry(16)
    with pytest.raises(PlacementFailure) as info:
        resample_until_feasible(lambda: (-5.0, -5.0), g, 100)
    assert info.value.attempts == 100


def test_layout_basics(tmp_path):
    lay = Layout([(1.0, 2.0), (3.0, 4.0)])
    assert lay.n == 2
    assert lay.append((5, 6)).n == 3
    assert lay.n == 2
    np.testing.assert_array_equal(lay.as_vector(), [1, 2, 3, 4])
    assert Layout.from_vector(lay.as_vector()) == lay
    with pytest.raises(InvalidArgument):
        Layout([(1.0, math.nan)])
    with pytest.raises(ValueError):
        lay.positions[0, 0] = 9.0


def test_layout_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    lay = Layout(rng.uniform(0, 565.685424949238, (16, 2)))
    path = save_layout(lay, tmp_path / "layout.json")
    doc = json.loads(path.read_text())
    assert set(doc) == {"n", "positions"}
    assert doc["n"] == 16
    assert load_layout(path) == lay
    with pytest.raises(InvalidArgument):
        Layout.from_json({"n": 3, "positions": [[0, 0]]})
