"""Sequential single-buoy placement: sector sampling, Nelder-Mead and LS-NM."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import EvaluationResult, FarmGeometry, Layout, in_bounds, is_clear, resample_until_feasible
from .ea import RunTrace, run_rng
from .errors import BudgetExhausted, InvalidArgument, PlacementFailure
from .hydro import Simulator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SLSConfig:
    """Annular sector search around the last placed buoy.

    Samples fall between ``safe + r1`` and ``safe + r2`` meters from the
    anchor, one per ``res``-degree sector.
    """

    res: float = 3.0
    r1: float = 0.0
    r2: float = 20.0
    safe: float = 50.0
    max_attempts: int = 50

    def __post_init__(self):
        sector_angles(self.res)
        if self.r1 < 0 or self.r2 < self.r1:
            raise InvalidArgument(f"ring radii need r2 >= r1 >= 0, got r1={self.r1}, r2={self.r2}")
        if self.max_attempts < 1:
            raise InvalidArgument("max_attempts must be >= 1")


@dataclass(frozen=True)
class SampleOutcome:
    angle_index: int
    position: tuple[float, float]
    value: float
    origin: str  # "simulator" | "surrogate"
    feasible: bool = True


class Placement(NamedTuple):
    layout: Layout
    result: EvaluationResult


def sector_angles(res: float) -> np.ndarray:
    """Sector start angles in degrees: ``0, res, ..., 360 - res``."""
    if not res > 0:
        raise InvalidArgument(f"angle resolution must be positive, got {res}")
    count = 360.0 / res
    if abs(count - round(count)) > 1e-9:
        raise InvalidArgument(f"angle resolution {res} does not divide 360")
    return np.arange(int(round(count))) * float(res)


def first_position(geometry: FarmGeometry) -> tuple[float, float]:
    """The bottom corner of the farm, where sequential placement starts."""
    return (geometry.side, 0.0)


def symmetric_sample(anchor, angle: float, cfg: SLSConfig, rng: np.random.Generator,
                     placed=None, geometry: FarmGeometry | None = None) -> tuple[float, float]:
    """Draw a point in the ring sector starting at ``angle`` degrees around ``anchor``.

    Radius is uniform in ``[safe + r1, safe + r2]`` and the angle uniform in
    ``[angle, angle + res)``. With a geometry, draws are repeated until the
    point is inside the farm and clear of every buoy in ``placed``; failure
    raises :class:`PlacementFailure` whose ``last_point`` is the final draw.
    """
    ax, ay = float(anchor[0]), float(anchor[1])

    def draw():
        r = rng.uniform(cfg.safe + cfg.r1, cfg.safe + cfg.r2)
        theta = math.radians(rng.uniform(angle, angle + cfg.res))
        return (ax + r * math.cos(theta), ay + r * math.sin(theta))

    if geometry is None:
        return draw()
    others = np.zeros((0, 2)) if placed is None else np.asarray(placed, dtype=float).reshape(-1, 2)
    return resample_until_feasible(
        draw, geometry, cfg.max_attempts, accept=lambda p: is_clear(p, others, geometry.min_distance)
    )


def _simplex_volume(verts: np.ndarray) -> float:
    edges = verts[1:] - verts[0]
    return abs(np.linalg.det(edges)) / math.factorial(edges.shape[0])


def nelder_mead(f: Callable, start, iterations: int, step: float = 1.0, simplex=None,
                start_value: float | None = None, reinflate: float | None = None):
    """Minimize ``f`` with exactly ``iterations`` Nelder-Mead iterations.

    Reflection 1, expansion 2, contraction 0.5, shrink 0.5. A simplex whose
    volume drops below 1e-12 is rebuilt around its best vertex with edge
    ``reinflate`` (default ``step``). Returns the best evaluated vertex and
    its value; ``start_value`` skips re-evaluating the start point.
    """
    if iterations < 1:
        raise InvalidArgument("nelder_mead needs at least one iteration")
    x0 = np.asarray(start, dtype=float)
    n = x0.size
    reinflate = step if reinflate is None else reinflate

    if simplex is None:
        verts = np.vstack([x0, x0 + step * np.eye(n)])
        vals = [f(x0) if start_value is None else float(start_value)]
        vals += [f(v) for v in verts[1:]]
    else:
        verts = np.array(simplex, dtype=float)
        if verts.shape != (n + 1, n):
            raise InvalidArgument(f"simplex must have shape {(n + 1, n)}")
        vals = [f(v) for v in verts]
    vals = np.array(vals, dtype=float)
    best_i = int(np.argmin(vals))
    best_x, best_v = verts[best_i].copy(), vals[best_i]

    def evaluate(x):
        nonlocal best_x, best_v
        v = f(x)
        if v < best_v:
            best_x, best_v = x.copy(), v
        return v

    for _ in range(iterations):
        if _simplex_volume(verts) < 1e-12:
            anchor = verts[int(np.argmin(vals))].copy()
            verts = np.vstack([anchor, anchor + reinflate * np.eye(n)])
            vals = np.concatenate([[vals.min()], [evaluate(v) for v in verts[1:]]])
        order = np.argsort(vals, kind="stable")
        verts, vals = verts[order], vals[order]
        centroid = verts[:-1].mean(axis=0)
        worst = verts[-1]

        xr = centroid + (centroid - worst)
        fr = evaluate(xr)
        if fr < vals[0]:
            xe = centroid + 2.0 * (xr - centroid)
            fe = evaluate(xe)
            verts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = evaluate(xc)
            accept = fc <= fr
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = evaluate(xc)
            accept = fc < vals[-1]
        if accept:
            verts[-1], vals[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
            vals[i] = evaluate(verts[i])
    return best_x, float(best_v)


def lsnm_place_next(partial: Layout, simulator: Simulator, sigma: float = 70.0, n_samples: int = 120,
                    ns: int = 25, rng: np.random.Generator | None = None, nm_step: float = 10.0) -> Placement:
    """Place one more buoy: Gaussian scatter around the last buoy, then Nelder-Mead.

    Only feasible points (inside the farm, clear of all buoys) are sent to
    the simulator; during the simplex search infeasible vertices score
    ``+inf`` without a simulator call.
    """
    if partial.n == 0:
        raise InvalidArgument("LS-NM placement needs at least one placed buoy")
    rng = rng if rng is not None else np.random.default_rng()
    geometry = simulator.geometry
    placed = partial.positions
    anchor = placed[-1]
    clear = lambda p: is_clear(p, placed, geometry.min_distance)

    def gaussian():
        dx, dy = rng.normal(0.0, sigma, 2)
        return (anchor[0] + dx, anchor[1] + dy)

    draws = []
    for _ in range(n_samples):
        try:
            draws.append(resample_until_feasible(gaussian, geometry, 100, accept=clear))
        except PlacementFailure:
            continue
    if not draws:
        side = geometry.side
        draws.append(resample_until_feasible(lambda: tuple(rng.uniform(0.0, side, 2)), geometry, 10_000, accept=clear))

    seen: dict[tuple[float, float], EvaluationResult] = {}

    def sim(point) -> EvaluationResult:
        key = (float(point[0]), float(point[1]))
        res = simulator.evaluate(partial.append(key))
        seen[key] = res
        return res

    best_p, best_r = None, None
    for p in draws:
        r = sim(p)
        if best_r is None or r.objective > best_r.objective:
            best_p, best_r = (float(p[0]), float(p[1])), r

    if ns > 0:
        def neg_power(x):
            pt = (float(x[0]), float(x[1]))
            if not (in_bounds(pt, geometry) and clear(pt)):
                return math.inf
            return -sim(pt).objective

        x, _ = nelder_mead(neg_power, best_p, ns, step=nm_step, start_value=-best_r.objective,
                           reinflate=0.01 * geometry.side)
        key = (float(x[0]), float(x[1]))
        if key in seen and seen[key].objective > best_r.objective:
            best_p, best_r = key, seen[key]
    return Placement(partial.append(best_p), best_r)


def run_lsnm(simulator: Simulator, sigma: float = 70.0, n_samples: int = 120, ns: int = 25,
             seed: int = 0, clock=None) -> RunTrace:
    """Full LS-NM run over ``simulator.geometry.n`` buoys, starting at the bottom corner.

    Stops early, keeping the last complete prefix, if the simulator budget runs out.
    """
    geometry = simulator.geometry
    clock = clock or time.perf_counter
    t0 = clock()
    rng = run_rng(seed, "lsnm")
    trace = RunTrace()
    trace.extras["partial"] = False
    try:
        layout = Layout([first_position(geometry)])
        result = simulator.evaluate(layout)
        trace.record(simulator.calls, clock() - t0, result.objective)
        for i in range(2, geometry.n + 1):
            sub = np.random.default_rng(rng.integers(2**63))
            layout, result = lsnm_place_next(layout, simulator, sigma, n_samples, ns, sub)
            trace.record(simulator.calls, clock() - t0, result.objective)
            log.info("lsnm buoy %d calls=%d power=%.1f", i, simulator.calls, result.objective)
    except BudgetExhausted:
        if not trace.points:
            raise
        # keep the last complete prefix
        trace.extras["partial"] = True
    trace.best_x = layout.as_vector()
    trace.best_objective = result.objective
    trace.extras["result"] = result
    return trace
