"""Adaptive neuro-surrogate sequential placement with backtracking refinement."""

from __future__ import annotations

import logging
import math
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import EvaluationResult, Layout, clamp_to_farm, in_bounds, is_clear, is_feasible, resample_until_feasible
from .ea import RunTrace, run_rng
from .errors import BudgetExhausted, InvalidArgument, PlacementFailure, WecFarmError
from .hydro import Simulator
from .seqplace import SLSConfig, first_position, sector_angles, symmetric_sample
from .surrogate import DataSet, LSTMModel, pad_sequence, tune_and_train

log = logging.getLogger(__name__)

STRATEGIES = ("s1", "s2", "s3", "s4")


@dataclass(frozen=True)
class StrategySpec:
    """Which placements use the simulator and how the surrogate is trained.

    Buoy indices are 1-based; buoy 1 is always simulator-evaluated.
    """

    name: str
    n: int
    eval_set: frozenset[int]
    estim_set: frozenset[int]
    training_scope: str  # "previous" | "all"
    backtracking: bool = True

    def __post_init__(self):
        full = set(range(2, self.n + 1))
        if self.eval_set & self.estim_set or (self.eval_set | self.estim_set) != full:
            raise InvalidArgument(f"strategy {self.name}: eval and estim sets must partition 2..{self.n}")
        if self.training_scope not in ("previous", "all"):
            raise InvalidArgument(f"unknown training scope {self.training_scope!r}")

    @property
    def label(self) -> str:
        return f"ANSO-{self.name.upper()}" + ("-B" if self.backtracking else "")


def strategy(name: str, n: int = 16, backtracking: bool = True) -> StrategySpec:
    """Build S1..S4 for ``n`` buoys.

    S1 and S3 evaluate buoys 2, 3 and then every second index from 5; S2
    evaluates 2, 3 and every third index from 6; S4 evaluates everything.
    S3 trains on all previous samples, the others on the previous
    evaluated placement only.
    """
    key = name.lower()
    if key not in STRATEGIES:
        raise InvalidArgument(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
    if n < 1:
        raise InvalidArgument(f"buoy count must be >= 1, got {n}")
    head = {i for i in (2, 3) if i <= n}
    if key in ("s1", "s3"):
        evals = head | set(range(5, n + 1, 2))
    elif key == "s2":
        evals = head | set(range(6, n + 1, 3))
    else:
        evals = set(range(2, n + 1))
    estim = set(range(2, n + 1)) - evals
    scope = "all" if key == "s3" else "previous"
    return StrategySpec(key, n, frozenset(evals), frozenset(estim), scope, backtracking)


@dataclass(frozen=True)
class BacktrackConfig:
    """Elitist (1+1) refinement of a complete layout.

    ``iterations=None`` runs until the simulator budget is exhausted.
    """

    sigma_max: float = 10.0
    iterations: int | None = 500
    sigma_mode: str = "increasing"
    omega_max: float = 0.1

    def __post_init__(self):
        if not self.sigma_max > 0:
            raise InvalidArgument("sigma_max must be positive")
        if self.iterations is not None and self.iterations < 0:
            raise InvalidArgument("backtracking iterations must be >= 0")
        if self.sigma_mode not in ("increasing", "decreasing"):
            raise InvalidArgument(f"sigma_mode must be increasing or decreasing, got {self.sigma_mode!r}")
        if not 0 <= self.omega_max <= 1:
            raise InvalidArgument("omega_max must lie in [0, 1]")


@dataclass(frozen=True)
class SurrogateConfig:
    pack_size: int = 8
    iterations: int = 10
    folds: int = 3
    holdout_fraction: float = 0.2
    box: dict | None = field(default=None, hash=False)


@dataclass(frozen=True)
class ANSOConfig:
    sls: SLSConfig = SLSConfig()
    backtrack: BacktrackConfig = BacktrackConfig()
    surrogate: SurrogateConfig = SurrogateConfig()


@dataclass
class PlacementState:
    """Everything carried from one placement to the next.

    ``result`` is the simulator evaluation of ``layout``, or ``None`` when the
    last buoy was placed by the surrogate.
    """

    layout: Layout
    result: EvaluationResult | None
    dataset: DataSet
    fallbacks: int = 0
    fallback_calls: int = 0
    surrogate_r: list[float] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    models: dict = field(default_factory=dict)


def sigma_schedule(iteration: int, iterations: int, cfg: BacktrackConfig) -> float:
    """Mutation step for 1-based ``iteration``; increasing mode is ``sigma_max * 0.08 * it / it_max``."""
    frac = iteration / iterations
    if cfg.sigma_mode == "increasing":
        return cfg.sigma_max * 0.08 * frac
    return cfg.sigma_max * 0.08 * (1.0 - frac) + 0.1


def mutation_probabilities(buoy_power, omega_max: float = 0.1) -> np.ndarray:
    """Per-buoy mutation probability, highest for the weakest buoy.

    ``(1/N) * max_power / power_i`` plus a rank weight falling linearly from
    ``omega_max`` (lowest power) to 0 (highest), clamped to ``[1/N, 1]``.
    """
    p = np.asarray(buoy_power, dtype=float)
    n = p.size
    if n == 0:
        raise InvalidArgument("need at least one buoy")
    ranks = np.empty(n)
    ranks[np.argsort(p, kind="stable")] = np.arange(n)
    omega = omega_max * (n - 1 - ranks) / (n - 1) if n > 1 else np.zeros(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(p > 0, (1.0 / n) * (p.max() / p), 1.0)
    return np.clip(base + omega, 1.0 / n, 1.0)


def _evaluate_all(simulator: Simulator, layouts, executor=None) -> list[EvaluationResult]:
    if executor is None:
        return [simulator.evaluate(l) for l in layouts]
    return list(executor.map(simulator.evaluate, layouts))


def _random_near(anchor, placed, simulator: Simulator, rng, cfg: SLSConfig):
    """A uniformly drawn feasible point near ``anchor``, widening to the whole farm."""
    geometry = simulator.geometry
    clear = lambda p: is_clear(p, placed, geometry.min_distance)
    reach = cfg.safe + max(cfg.r2, geometry.side / 4)

    def near():
        r = rng.uniform(cfg.safe, reach)
        theta = rng.uniform(0.0, 2 * math.pi)
        return (anchor[0] + r * math.cos(theta), anchor[1] + r * math.sin(theta))

    try:
        return resample_until_feasible(near, geometry, 1000, accept=clear)
    except PlacementFailure:
        side = geometry.side
        return resample_until_feasible(lambda: tuple(rng.uniform(0.0, side, 2)), geometry, 100_000, accept=clear)


def _polar(anchor, p):
    dx, dy = p[0] - anchor[0], p[1] - anchor[1]
    return math.hypot(dx, dy), math.degrees(math.atan2(dy, dx)) % 360.0


def place_first(simulator: Simulator, dataset: DataSet | None = None) -> PlacementState:
    """Buoy 1 at the bottom corner ``(side, 0)``, evaluated once."""
    geometry = simulator.geometry
    layout = Layout([first_position(geometry)])
    result = simulator.evaluate(layout)
    dataset = dataset if dataset is not None else DataSet(geometry.side)
    dataset.add(layout.positions, result.objective, 1)
    return PlacementState(layout, result, dataset)


def place_evaluated(state: PlacementState, simulator: Simulator, cfg: SLSConfig, rng: np.random.Generator,
                    executor=None) -> PlacementState:
    """One simulator-evaluated placement: sector sweep, two refinements, best of three.

    Every sector contributes exactly one evaluation. A sector whose draws all
    break a constraint evaluates its last draw clamped into the farm and is
    marked infeasible. With ``res = 3`` this makes 122 calls per placement
    unless no sector is feasible, in which case one extra random feasible
    point is evaluated and counted as a fallback.
    """
    geometry = simulator.geometry
    placed = state.layout.positions
    anchor = placed[-1]
    index = state.layout.n + 1
    clear = lambda p: in_bounds(p, geometry) and is_clear(p, placed, geometry.min_distance)

    points = []
    for angle in sector_angles(cfg.res):
        try:
            points.append(symmetric_sample(anchor, angle, cfg, rng, placed=placed, geometry=geometry))
        except PlacementFailure as exc:
            points.append(tuple(clamp_to_farm(exc.last_point, geometry)))
    results = _evaluate_all(simulator, [state.layout.append(p) for p in points], executor)
    feasible = [clear(p) and r.feasible for p, r in zip(points, results)]

    best = None
    for j, (p, r, ok) in enumerate(zip(points, results, feasible)):
        if ok and (best is None or r.objective > results[best].objective):
            best = j
    if best is None:
        p = _random_near(anchor, placed, simulator, rng, cfg)
        r = simulator.evaluate(state.layout.append(p))
        state.fallbacks += 1
        state.fallback_calls += 1
        points.append(p)
        results.append(r)
        feasible.append(True)
        best = len(points) - 1
        log.info("buoy %d: no feasible sector sample, random fallback", index)

    radius, theta = _polar(anchor, points[best])
    refine = []
    for sign in (-1.0, 1.0):
        t = math.radians(theta + sign * cfg.res / 2)
        refine.append(tuple(clamp_to_farm((anchor[0] + radius * math.cos(t), anchor[1] + radius * math.sin(t)), geometry)))
    refine_results = _evaluate_all(simulator, [state.layout.append(p) for p in refine], executor)

    candidates = [(points[best], results[best])]
    for p, r in zip(refine, refine_results):
        points.append(p)
        results.append(r)
        ok = clear(p) and r.feasible
        feasible.append(ok)
        if ok:
            candidates.append((p, r))
    chosen, chosen_r = candidates[0]
    for p, r in candidates[1:]:
        if r.objective > chosen_r.objective:
            chosen, chosen_r = p, r

    for p, r, ok in zip(points, results, feasible):
        if ok:
            state.dataset.add(np.vstack([placed, p]), r.objective, index)
    state.layout = state.layout.append(chosen)
    state.result = chosen_r
    return state


def _training_set(state: PlacementState, scope: str) -> DataSet:
    if scope == "all":
        return state.dataset
    latest = max(state.dataset.provenance())
    return state.dataset.restricted_to(latest)


def train_surrogate(state: PlacementState, scope: str, cfg: SurrogateConfig, seed: int) -> LSTMModel:
    """Tune and retrain on the scoped data; reuses the model when that data is unchanged."""
    data = _training_set(state, scope)
    key = (tuple(data.provenance()), len(data))
    if key not in state.models:
        tune_seed = zlib.crc32(f"{seed}:{key}".encode())
        model = tune_and_train(data, cfg.pack_size, cfg.iterations, cfg.folds, tune_seed, cfg.holdout_fraction, cfg.box)
        state.models[key] = model
        state.surrogate_r.append(model.validation_r)
    return state.models[key]


def place_estimated(state: PlacementState, simulator: Simulator, cfg: SLSConfig, model: LSTMModel,
                    rng: np.random.Generator) -> tuple[PlacementState, float]:
    """One surrogate placement: score a sample per sector with the LSTM and keep the best.

    Makes no simulator calls. Returns the state and the predicted power of
    the chosen layout.
    """
    geometry = simulator.geometry
    placed = state.layout.positions
    anchor = placed[-1]
    points = []
    for angle in sector_angles(cfg.res):
        try:
            points.append(symmetric_sample(anchor, angle, cfg, rng, placed=placed, geometry=geometry))
        except PlacementFailure:
            continue
    if not points:
        points.append(_random_near(anchor, placed, simulator, rng, cfg))
        state.fallbacks += 1
        log.info("buoy %d: no feasible surrogate candidate, random fallback", state.layout.n + 1)
    length = placed.shape[0] + 1
    seqs = np.stack([pad_sequence(np.vstack([placed, p]), length) for p in points])
    scores = model.predict(seqs)
    best = int(np.argmax(scores))  # first index wins ties
    state.layout = state.layout.append(points[best])
    state.result = None
    return state, float(scores[best])


def backtrack(layout: Layout, simulator: Simulator, cfg: BacktrackConfig, rng: np.random.Generator,
              incumbent: EvaluationResult | None = None, on_accept=None):
    """Elitist (1+1) refinement; returns ``(layout, result, iterations_run)``.

    The schedule length is ``cfg.iterations``; the loop stops early, keeping
    the incumbent, when the simulator budget runs out.
    """
    geometry = simulator.geometry
    cur = incumbent if incumbent is not None else simulator.evaluate(layout)
    positions = layout.positions
    iterations = cfg.iterations
    if iterations is None:
        remaining = simulator.counter.remaining
        if remaining is None:
            raise InvalidArgument("backtracking without an iteration count needs a call budget")
        iterations = remaining
    done = 0
    for it in range(1, iterations + 1):
        sigma = sigma_schedule(it, iterations, cfg)
        pm = mutation_probabilities(cur.buoy_power, cfg.omega_max)
        mask = rng.random(positions.shape[0]) < pm
        if not mask.any():
            mask[int(np.argmax(pm))] = True
        trial = positions.copy()
        trial[mask] += rng.normal(0.0, sigma, (int(mask.sum()), 2))
        trial = clamp_to_farm(trial, geometry)
        try:
            res = simulator.evaluate(trial)
        except BudgetExhausted:
            break
        done = it
        if res.objective > cur.objective:
            positions, cur = trial, res
            if on_accept is not None:
                on_accept(cur)
    return Layout(positions), cur, done


def run_anso(simulator: Simulator, spec: StrategySpec, cfg: ANSOConfig = ANSOConfig(), seed: int = 0,
             executor=None, clock=None) -> RunTrace:
    """Sequential placement under ``spec`` followed by optional backtracking.

    ``extras`` reports ``pre_backtrack_calls`` (placement sweeps only),
    ``final_eval_calls`` (evaluating a layout whose last buoy came from the
    surrogate), ``backtrack_calls``, ``fallbacks``, ``fallback_calls``,
    ``surrogate_r``, per-placement ``log`` entries, ``partial`` and the
    collected ``dataset``.
    """
    geometry = simulator.geometry
    if spec.n != geometry.n:
        raise InvalidArgument(f"strategy is for {spec.n} buoys but the farm holds {geometry.n}")
    clock = clock or time.perf_counter
    t0 = clock()
    rng = run_rng(seed, "anso")
    trace = RunTrace()
    extras = trace.extras
    extras.update(partial=False, final_eval_calls=0, backtrack_calls=0)
    start_calls = simulator.calls

    def record(value):
        trace.record(simulator.calls - start_calls, clock() - t0, value)

    state = place_first(simulator)
    record(state.result.objective)
    state.log.append(dict(buoy=1, branch="eval", calls=simulator.calls - start_calls, energy=state.result.objective))
    last_eval = (state.layout, state.result)
    try:
        for i in range(2, geometry.n + 1):
            sub = np.random.default_rng(rng.integers(2**63))
            if i in spec.eval_set:
                state = place_evaluated(state, simulator, cfg.sls, sub, executor)
                last_eval = (state.layout, state.result)
                energy, r = state.result.objective, None
                record(energy)
                branch = "eval"
            else:
                before = len(state.surrogate_r)
                model = train_surrogate(state, spec.training_scope, cfg.surrogate, seed)
                r = state.surrogate_r[-1] if len(state.surrogate_r) > before else None
                state, energy = place_estimated(state, simulator, cfg.sls, model, sub)
                branch = "estim"
            if not is_feasible(state.layout, geometry):
                raise WecFarmError(f"placement of buoy {i} produced an infeasible prefix")
            entry = dict(buoy=i, branch=branch, calls=simulator.calls - start_calls, energy=energy)
            if r is not None:
                entry["r"] = r
            state.log.append(entry)
            log.info(
                "buoy %d %s calls=%d energy=%.1f%s", i, branch, entry["calls"], energy,
                "" if r is None else f" R={r:.3f}",
            )
        extras["pre_backtrack_calls"] = simulator.calls - start_calls - state.fallback_calls
        if state.result is None:
            state.result = simulator.evaluate(state.layout)
            extras["final_eval_calls"] = 1
            record(state.result.objective)
    except BudgetExhausted:
        extras["partial"] = True
        layout, result = last_eval
        log.warning("budget exhausted after %d calls; returning %d-buoy prefix", simulator.calls, layout.n)
        _finish(trace, state, layout, result)
        return trace

    layout, result = state.layout, state.result
    if spec.backtracking:
        before = simulator.calls
        layout, result, iters = backtrack(layout, simulator, cfg.backtrack, rng, result, on_accept=lambda r: record(r.objective))
        extras["backtrack_calls"] = simulator.calls - before
        extras["backtrack_iterations"] = iters
        record(result.objective)
    _finish(trace, state, layout, result)
    return trace


def _finish(trace: RunTrace, state: PlacementState, layout: Layout, result: EvaluationResult):
    trace.best_x = layout.as_vector()
    trace.best_objective = result.objective
    trace.extras.update(
        result=result,
        fallbacks=state.fallbacks,
        fallback_calls=state.fallback_calls,
        surrogate_r=list(state.surrogate_r),
        log=state.log,
        dataset=state.dataset,
    )
