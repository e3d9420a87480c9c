"""Experiment plans, seeded runs, statistics, Friedman ranking and file export."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .anso import ANSOConfig, BacktrackConfig, SurrogateConfig, run_anso, strategy
from .core import FarmGeometry, Layout, save_layout
from .ea import METHODS as EA_METHODS
from .ea import RUNNERS, EAConfig, RunTrace
from .errors import ConfigurationError, InvalidArgument, WecFarmError
from .hydro import CallCounter, Simulator, WaveScenario, load_scenario
from .seqplace import SLSConfig, run_lsnm

log = logging.getLogger(__name__)

METHODS = (*EA_METHODS, "lsnm", "anso")
_LABELS = {"de": "DE", "pso": "PSO", "cmaes": "CMA-ES", "mu-lambda": "(mu+lambda)EA", "lsnm": "LS-NM"}
SUMMARY_COLUMNS = ("method", "scenario", "max", "min", "mean", "median", "std", "mean_calls", "mean_seconds")
TRACE_COLUMNS = ("calls", "seconds", "best_watts")
RANK_COLUMNS = ("method", "mean_rank", "chi_square", "p_value")


def fmt(v) -> str:
    """17 significant digits, '.' decimal point, no grouping."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


@dataclass(frozen=True)
class ExperimentPlan:
    """One method on one scenario, repeated over ``runs`` consecutive seeds.

    ``bo_iters=None`` lets backtracking use whatever budget the placement
    phase left over. ``wall_time=False`` writes ``nan`` in every seconds
    column so output files depend only on the plan.
    """

    scenario: str
    method: str
    strategy: str = "s4"
    backtrack: bool = True
    runs: int = 10
    budget: int = 6000
    seed: int = 0
    out: str | None = None
    threads: int = 1
    buoys: int = 16
    wall_time: bool = True
    ea_params: dict = field(default_factory=dict, hash=False)
    sls_res: float = 3.0
    sls_r1: float = 0.0
    sls_r2: float = 20.0
    lsnm_ns: int = 25
    lsnm_samples: int = 120
    lsnm_sigma: float = 70.0
    bo_iters: int | None = 500
    bo_sigma_mode: str = "increasing"
    gwo_pack: int = 8
    gwo_iters: int = 10
    gwo_folds: int = 3
    gwo_box: dict | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}", "method")
        for name in ("runs", "budget", "threads", "buoys"):
            if getattr(self, name) < 1:
                raise ConfigurationError("must be >= 1", name)
        try:
            if self.method == "anso":
                strategy(self.strategy, self.buoys, self.backtrack)
                self.anso_config()
            if self.method in EA_METHODS:
                cfg = self.ea_config(self.seed)
                if self.budget < (cfg.mu if self.method == "mu-lambda" else cfg.population):
                    raise ConfigurationError(f"budget {self.budget} is smaller than one generation", "budget")
            if self.method == "lsnm" and (self.lsnm_samples < 1 or self.lsnm_ns < 0 or self.lsnm_sigma <= 0):
                raise ConfigurationError("LS-NM needs samples >= 1, ns >= 0 and sigma > 0", "lsnm")
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc), self.method) from exc

    @property
    def label(self) -> str:
        if self.method == "anso":
            return strategy(self.strategy, self.buoys, self.backtrack).label
        return _LABELS[self.method]

    def ea_config(self, seed: int) -> EAConfig:
        cfg = EAConfig.for_method(self.method, budget=self.budget, seed=seed)
        return cfg.with_params({k: str(v) for k, v in self.ea_params.items()})

    def anso_config(self) -> ANSOConfig:
        return ANSOConfig(
            sls=SLSConfig(res=self.sls_res, r1=self.sls_r1, r2=self.sls_r2),
            backtrack=BacktrackConfig(iterations=self.bo_iters, sigma_mode=self.bo_sigma_mode),
            surrogate=SurrogateConfig(self.gwo_pack, self.gwo_iters, self.gwo_folds, box=self.gwo_box),
        )


_PLAN_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentPlan)}


def plan_from_dict(data: dict, where: str = "") -> ExperimentPlan:
    """Build a plan from a JSON-style mapping whose keys are plan field names."""
    if not isinstance(data, dict):
        raise ConfigurationError("expected an object", where or "plan")
    unknown = sorted(set(data) - set(_PLAN_FIELDS))
    if unknown:
        raise ConfigurationError("unknown field", f"{where}{unknown[0]}")
    for key in ("scenario", "method"):
        if key not in data:
            raise ConfigurationError("missing required field", f"{where}{key}")
    try:
        return ExperimentPlan(**data)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), where.rstrip(".") or None) from exc
    except TypeError as exc:
        raise ConfigurationError(str(exc), where.rstrip(".") or "plan") from exc


def load_compare_plan(path) -> list[ExperimentPlan]:
    """A comparison file: shared settings plus a ``methods`` list of per-method overrides.

    Every method shares the scenario, budget, runs and seeds.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read plan: {exc.strerror}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno}: {exc.msg}", str(path)) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("methods"), list) or not doc["methods"]:
        raise ConfigurationError("expected a nonempty list", "methods")
    shared = {k: v for k, v in doc.items() if k != "methods"}
    plans = []
    for i, entry in enumerate(doc["methods"]):
        if not isinstance(entry, dict):
            raise ConfigurationError("expected an object", f"methods[{i}]")
        for key in ("scenario", "budget", "runs", "seed"):
            if key in entry:
                raise ConfigurationError("must be shared by all methods", f"methods[{i}].{key}")
        plans.append(plan_from_dict({**shared, **entry}, f"methods[{i}]."))
    return plans


@dataclass
class RunRecord:
    seed: int
    trace: RunTrace
    layout: Layout
    objective: float
    seconds: float
    calls: int
    fallbacks: int = 0
    surrogate_r: list[float] = field(default_factory=list)
    partial: bool = False


@dataclass(frozen=True)
class SummaryStats:
    max: float
    min: float
    mean: float
    median: float
    std: float


def build_simulator(plan: ExperimentPlan, scenario: WaveScenario) -> Simulator:
    return Simulator(scenario, FarmGeometry(n=plan.buoys), CallCounter(limit=plan.budget))


def run_single(plan: ExperimentPlan, scenario: WaveScenario, seed: int) -> RunRecord:
    """One seeded run; the simulator refuses calls beyond ``plan.budget``."""
    sim = build_simulator(plan, scenario)
    clock = time.perf_counter if plan.wall_time else (lambda: math.nan)
    start = time.perf_counter()
    if plan.method in EA_METHODS:
        cfg = plan.ea_config(seed)
        trace = RUNNERS[plan.method](sim.objective, sim.geometry.bounds(), cfg, clock=clock)
    elif plan.method == "lsnm":
        trace = run_lsnm(sim, plan.lsnm_sigma, plan.lsnm_samples, plan.lsnm_ns, seed, clock=clock)
    else:
        spec = strategy(plan.strategy, plan.buoys, plan.backtrack)
        trace = run_anso(sim, spec, plan.anso_config(), seed, clock=clock)
    seconds = time.perf_counter() - start if plan.wall_time else math.nan
    if sim.calls > plan.budget:
        raise WecFarmError(f"run used {sim.calls} calls, over the budget of {plan.budget}")
    return RunRecord(
        seed=seed,
        trace=trace,
        layout=Layout.from_vector(trace.best_x),
        objective=float(trace.best_objective),
        seconds=seconds,
        calls=sim.calls,
        fallbacks=int(trace.extras.get("fallbacks", 0)),
        surrogate_r=list(trace.extras.get("surrogate_r", [])),
        partial=bool(trace.extras.get("partial", False)),
    )


def run_experiment(plan: ExperimentPlan, scenario: WaveScenario | None = None) -> list[RunRecord]:
    """Run seeds ``seed .. seed + runs - 1``, possibly concurrently, then write outputs."""
    scenario = scenario if scenario is not None else load_scenario(plan.scenario)
    seeds = [plan.seed + k for k in range(plan.runs)]
    if plan.threads > 1 and plan.runs > 1:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            records = list(pool.map(lambda s: run_single(plan, scenario, s), seeds))
    else:
        records = [run_single(plan, scenario, s) for s in seeds]
    for r in records:
        log.info("%s seed=%d calls=%d best=%.1f W", plan.label, r.seed, r.calls, r.objective)
    if plan.out is not None:
        export(records, summarize(records), plan.out, plan.label, scenario.name)
    return records


def summarize(records) -> SummaryStats:
    """Statistics of final best objectives; ``std`` uses ``n - 1``."""
    values = np.array([r.objective if isinstance(r, RunRecord) else r for r in records], dtype=float)
    if values.size == 0:
        raise InvalidArgument("cannot summarize zero records")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return SummaryStats(
        float(np.max(values)), float(np.min(values)), float(np.mean(values)), float(np.median(values)), std
    )


@dataclass(frozen=True)
class FriedmanResult:
    mean_ranks: np.ndarray
    chi_square: float
    p_value: float


def friedman_ranks(table) -> FriedmanResult:
    """Mean rank per method (rows) over runs (columns); rank 1 is the highest objective.

    Ties share the average rank. The chi-square statistic uses the rank sums
    directly, without a tie correction.
    """
    try:
        t = np.array(table, dtype=float)
    except ValueError as exc:
        raise InvalidArgument(f"table must be rectangular: {exc}") from exc
    if t.ndim != 2:
        raise InvalidArgument("table must be a 2-D methods x runs array")
    k, n = t.shape
    if k < 2 or n < 2:
        raise InvalidArgument(f"need at least 2 methods and 2 runs, got {k} x {n}")
    ranks = sps.rankdata(-t, axis=0, method="average")
    sums = ranks.sum(axis=1)
    chi = (12.0 * float(np.sum(sums * sums)) - 3.0 * n * n * k * (k + 1) ** 2) / (n * k * (k + 1))
    return FriedmanResult(sums / n, chi, float(sps.chi2.sf(chi, k - 1)))


def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise WecFarmError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def summary_row(label: str, scenario: str, records, stats: SummaryStats) -> list[str]:
    mean_calls = float(np.mean([r.calls for r in records]))
    mean_seconds = float(np.mean([r.seconds for r in records]))
    return [label, scenario, *(fmt(v) for v in (stats.max, stats.min, stats.mean, stats.median, stats.std)),
            fmt(mean_calls), fmt(mean_seconds)]


def write_trace(trace: RunTrace, path) -> Path:
    rows = [[fmt(c), fmt(s), fmt(b)] for c, s, b in trace.points]
    return _write_csv(Path(path), TRACE_COLUMNS, rows)


def export(records, stats: SummaryStats, directory, label: str, scenario: str) -> list[Path]:
    """Write ``summary.csv`` plus one trace CSV and layout JSON per seed."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WecFarmError(f"cannot create {d}: {exc.strerror}") from exc
    written = [_write_csv(d / "summary.csv", SUMMARY_COLUMNS, [summary_row(label, scenario, records, stats)])]
    for r in records:
        written.append(write_trace(r.trace, d / f"trace_{r.seed}.csv"))
        path = d / f"layout_{r.seed}.json"
        try:
            written.append(save_layout(r.layout, path))
        except OSError as exc:
            raise WecFarmError(f"cannot write {path}: {exc.strerror}") from exc
    return written


def run_comparison(plans: list[ExperimentPlan]):
    """Run every plan on the same scenario, budget and seeds; write ranks when an output is set.

    Returns ``(records by label, FriedmanResult or None)``.
    """
    first = plans[0]
    scenario = load_scenario(first.scenario)
    results: dict[str, list[RunRecord]] = {}
    for plan in plans:
        if plan.label in results:
            raise ConfigurationError(f"method {plan.label} listed twice", "methods")
        sub = None if first.out is None else str(Path(first.out) / _slug(plan.label))
        results[plan.label] = run_experiment(dataclasses.replace(plan, out=sub), scenario)
    ranks = None
    if len(plans) >= 2 and first.runs >= 2:
        ranks = friedman_ranks([[r.objective for r in recs] for recs in results.values()])
    if first.out is not None:
        out = Path(first.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [summary_row(label, scenario.name, recs, summarize(recs)) for label, recs in results.items()]
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
        if ranks is not None:
            rank_rows = [[label, fmt(m), fmt(ranks.chi_square), fmt(ranks.p_value)]
                         for label, m in zip(results, ranks.mean_ranks)]
            _write_csv(out / "ranks.csv", RANK_COLUMNS, rank_rows)
    return results, ranks


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c == "-" else "_" for c in label).strip("_")
