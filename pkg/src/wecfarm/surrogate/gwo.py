"""Grey wolf optimizer for low-dimensional box-constrained minimization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InvalidArgument


def a_schedule(t: int, iterations: int) -> float:
    """Control scalar, linear from 2 at ``t = 0`` to 0 at ``t = iterations - 1``."""
    if iterations <= 1:
        return 2.0
    return 2.0 - 2.0 * t / (iterations - 1)


@dataclass
class GWOResult:
    best_x: np.ndarray
    best_fitness: float
    # (iteration, wolf position, fitness) for every evaluation, in order
    history: list[tuple[int, np.ndarray, float]] = field(default_factory=list)

    def best_per_iteration(self) -> list[float]:
        out: list[float] = []
        for it, _, fit in self.history:
            if it >= len(out):
                out.append(fit if not out else min(out[-1], fit))
            else:
                out[it] = min(out[it], fit)
        return out


def gwo_optimize(fitness: Callable[[np.ndarray], float], lower, upper, pack_size: int = 8,
                 iterations: int = 10, seed: int = 0, start=None) -> GWOResult:
    """Minimize ``fitness`` over the box ``[lower, upper]``.

    The initial pack is evaluated, then each of ``iterations`` steps moves
    every wolf to the mean of its three leader-guided steps, clamps it to the
    box and evaluates it; the leaders (alpha, beta, delta) are the three best
    positions seen so far, earlier winning ties. ``start`` replaces wolf 0's
    initial position, which guarantees that point is evaluated.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise InvalidArgument("GWO bounds must be matching vectors with upper >= lower")
    if pack_size < 3:
        raise InvalidArgument(f"pack_size must be >= 3, got {pack_size}")
    if iterations < 1:
        raise InvalidArgument("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    dim = lo.size
    pack = rng.uniform(lo, hi, (pack_size, dim))
    if start is not None:
        pack[0] = np.clip(np.asarray(start, dtype=float), lo, hi)

    leaders: list[tuple[float, np.ndarray]] = []
    history = []

    def evaluate(t):
        nonlocal leaders
        for w in range(pack_size):
            fit = float(fitness(pack[w].copy()))
            history.append((t, pack[w].copy(), fit))
            leaders.append((fit, pack[w].copy()))
        # stable sort keeps the earliest among equals
        leaders = sorted(leaders, key=lambda e: e[0])[:3]

    evaluate(0)
    for t in range(iterations):
        a = a_schedule(t, iterations)
        moved = np.zeros_like(pack)
        for _, leader in leaders:
            big_a = 2.0 * a * rng.random((pack_size, dim)) - a
            big_c = 2.0 * rng.random((pack_size, dim))
            dist = np.abs(big_c * leader - pack)
            moved += leader - big_a * dist
        pack = np.clip(moved / len(leaders), lo, hi)
        evaluate(t + 1)
    best_fit, best_x = leaders[0]
    return GWOResult(best_x, best_fit, history)
