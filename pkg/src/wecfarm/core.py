"""Layouts, farm geometry, constraint measurement and the penalized objective."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidArgument, PlacementFailure

DEFAULT_MIN_DISTANCE = 50.0
DEFAULT_AREA_PER_BUOY = 20000.0
PENALTY_EXPONENT = 20


class Layout:
    """Ordered buoy positions in meters, stored as an ``(n, 2)`` float array.

    Order matters: it is the placement order for the sequential methods and
    the input order of the surrogate. Instances are treated as immutable;
    :meth:`append` returns a new layout.
    """

    __slots__ = ("_positions",)

    def __init__(self, positions: Iterable = ()):
        arr = np.array(positions, dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, 2))
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidArgument(f"positions must have shape (n, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("layout coordinates must be finite")
        arr.setflags(write=False)
        self._positions = arr

    @classmethod
    def from_vector(cls, vec) -> "Layout":
        """Build from a flat genome ``[x1, y1, ..., xN, yN]``."""
        return cls(np.asarray(vec, dtype=float).reshape(-1, 2))

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def n(self) -> int:
        return self._positions.shape[0]

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self._positions if dtype is None else self._positions.astype(dtype)

    def __iter__(self):
        return iter(map(tuple, self._positions))

    def __eq__(self, other):
        if not isinstance(other, Layout):
            return NotImplemented
        return np.array_equal(self._positions, other._positions)

    def __repr__(self):
        return f"Layout(n={self.n})"

    def as_vector(self) -> np.ndarray:
        return self._positions.reshape(-1).copy()

    def append(self, point) -> "Layout":
        return Layout(np.vstack([self._positions, np.asarray(point, dtype=float).reshape(1, 2)]))

    def replace(self, index: int, point) -> "Layout":
        arr = self._positions.copy()
        arr[index] = point
        return Layout(arr)

    def to_json(self) -> dict:
        return {"n": self.n, "positions": self._positions.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Layout":
        try:
            positions = data["positions"]
            n = int(data["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed layout document: {exc}") from exc
        layout = cls(positions)
        if layout.n != n:
            raise InvalidArgument(f"layout declares n={n} but lists {layout.n} positions")
        return layout


def save_layout(layout: Layout, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(layout.to_json()) + "\n")
    return path


def load_layout(path) -> Layout:
    return Layout.from_json(json.loads(Path(path).read_text()))


def farm_side(n: int, area_per_buoy: float = DEFAULT_AREA_PER_BUOY) -> float:
    """Side length of the square farm giving ``area_per_buoy`` to each of ``n`` buoys."""
    if n < 1:
        raise InvalidArgument(f"buoy count must be >= 1, got {n}")
    if not area_per_buoy > 0:
        raise InvalidArgument(f"area per buoy must be positive, got {area_per_buoy}")
    return math.sqrt(n * area_per_buoy)


@dataclass(frozen=True)
class FarmGeometry:
    n: int = 16
    min_distance: float = DEFAULT_MIN_DISTANCE
    area_per_buoy: float = DEFAULT_AREA_PER_BUOY

    def __post_init__(self):
        if not self.min_distance > 0:
            raise InvalidArgument(f"min_distance must be positive, got {self.min_distance}")
        farm_side(self.n, self.area_per_buoy)

    @property
    def side(self) -> float:
        return farm_side(self.n, self.area_per_buoy)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds of the flat genome of ``n`` buoys."""
        return np.zeros(2 * self.n), np.full(2 * self.n, self.side)


@dataclass(frozen=True)
class EvaluationResult:
    raw_power: float
    violation_sum: float
    penalty: float
    objective: float
    simulator_calls: int = 1
    buoy_power: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def feasible(self) -> bool:
        return self.violation_sum == 0.0


def _distance(dx, dy):
    # Single definition so spacing checks and violation sums agree to the bit.
    return np.sqrt(dx * dx + dy * dy)


def pairwise_distances(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    return _distance(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])


def violation_sum(layout, min_distance: float = DEFAULT_MIN_DISTANCE) -> float:
    """Total shortfall below ``min_distance`` over unordered buoy pairs, in meters."""
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    if p.shape[0] < 2:
        return 0.0
    iu = np.triu_indices(p.shape[0], k=1)
    d = pairwise_distances(p)[iu]
    return float(np.sum(np.maximum(0.0, min_distance - d)))


def penalty(violation: float) -> float:
    """Steep power penalty; exactly zero for a feasible layout."""
    if violation < 0:
        raise InvalidArgument(f"violation sum must be non-negative, got {violation}")
    if violation == 0:
        return 0.0
    return float((violation + 1.0) ** PENALTY_EXPONENT)


def in_bounds(point, geometry: FarmGeometry) -> bool:
    x, y = point
    side = geometry.side
    return bool(0.0 <= x <= side and 0.0 <= y <= side)


def clamp_to_farm(positions, geometry: FarmGeometry) -> np.ndarray:
    return np.clip(np.asarray(positions, dtype=float), 0.0, geometry.side)


def is_clear(point, placed, min_distance: float = DEFAULT_MIN_DISTANCE) -> bool:
    """True when ``point`` keeps at least ``min_distance`` from every placed buoy."""
    placed = np.asarray(placed, dtype=float).reshape(-1, 2)
    if placed.shape[0] == 0:
        return True
    d = _distance(placed[:, 0] - point[0], placed[:, 1] - point[1])
    return bool(np.all(d >= min_distance))


def is_feasible(layout, geometry: FarmGeometry) -> bool:
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    inside = bool(np.all((p >= 0.0) & (p <= geometry.side)))
    return inside and violation_sum(p, geometry.min_distance) == 0.0


def resample_until_feasible(
    sampler: Callable[[], tuple[float, float]],
    geometry: FarmGeometry,
    max_attempts: int = 100,
    accept: Callable[[tuple[float, float]], bool] | None = None,
):
    """Draw from ``sampler`` until a point lands inside the farm.

    ``accept`` adds an extra feasibility test (e.g. the spacing rule).
    Raises :class:`PlacementFailure` after ``max_attempts`` rejected draws.
    """
    if max_attempts < 1:
        raise InvalidArgument("max_attempts must be >= 1")
    point = None
    for _ in range(max_attempts):
        point = sampler()
        if in_bounds(point, geometry) and (accept is None or accept(point)):
            return point
    raise PlacementFailure(max_attempts, point)
