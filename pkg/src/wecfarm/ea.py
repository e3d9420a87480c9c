"""Population-based baselines that optimize every coordinate of a layout at once.

All runners *maximize* ``objective`` over a box and spend the simulator
budget generation by generation; a trailing partial generation is dropped
rather than overspending. Candidates are clamped into the box before each
evaluation, and constraint handling beyond the box is left to the penalty
inside the objective.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InvalidArgument

log = logging.getLogger(__name__)

METHODS = ("de", "pso", "cmaes", "mu-lambda")


@dataclass(frozen=True)
class EAConfig:
    method: str = "de"
    population: int = 30
    de_F: float = 0.5
    de_Pcr: float = 0.5
    mu: int = 50
    mutation_sigma_fraction: float = 0.1
    pso_c1: float = 1.5
    pso_c2: float = 2.0
    pso_inertia_start: float = 1.0
    pso_inertia_end: float = 0.4
    pso_vmax_fraction: float = 0.2
    cmaes_sigma_fraction: float = 0.3
    budget: int = 6000
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown EA method {self.method!r}")
        if self.population < 1 or self.mu < 1:
            raise InvalidArgument("population sizes must be >= 1")
        if self.method == "de" and self.population < 4:
            raise InvalidArgument("DE needs a population of at least 4")
        for name in ("de_Pcr", "pso_inertia_start", "pso_inertia_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1]")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "EAConfig":
        """Defaults for ``method``; (mu+lambda) breeds 25 children per generation."""
        base = {"method": method}
        if method == "mu-lambda":
            base["population"] = 25
        base.update(overrides)
        return cls(**base)

    def with_params(self, params: dict[str, str]) -> "EAConfig":
        """Override fields from ``key=value`` strings, coercing to each field's type."""
        types = {f.name: f.type for f in dataclasses.fields(self)}
        updates = {}
        for key, raw in params.items():
            if key not in types or key == "method":
                raise ConfigurationError(f"unknown EA parameter {key!r}", "ea-param")
            try:
                updates[key] = int(raw) if types[key] == "int" else float(raw)
            except ValueError as exc:
                raise ConfigurationError(f"cannot parse {raw!r}", f"ea-param {key}") from exc
        try:
            return dataclasses.replace(self, **updates)
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc), "ea-param") from exc


@dataclass
class RunTrace:
    points: list[tuple[int, float, float]] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_objective: float = -math.inf
    extras: dict = field(default_factory=dict)

    def record(self, calls: int, elapsed: float, best: float):
        if self.points and best < self.points[-1][2]:
            best = self.points[-1][2]
        self.points.append((int(calls), float(elapsed), float(best)))

    @property
    def calls(self) -> int:
        return self.points[-1][0] if self.points else 0


def run_rng(seed: int, tag: str) -> np.random.Generator:
    """One independent stream per (seed, method tag)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, zlib.crc32(tag.encode())]))


def _box(bounds):
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
        raise InvalidArgument("bounds must be two equal-length vectors with upper > lower")
    return lo, hi


def _evaluate(objective, xs, executor):
    if executor is None:
        return np.array([objective(x) for x in xs], dtype=float)
    return np.array(list(executor.map(objective, list(xs))), dtype=float)


class _Tracker:
    def __init__(self, clock):
        self.clock = clock or time.perf_counter
        self.t0 = self.clock()
        self.trace = RunTrace()
        self.calls = 0

    def update(self, xs, fits):
        self.calls += len(fits)
        i = int(np.argmax(fits))
        if fits[i] > self.trace.best_objective:
            self.trace.best_objective = float(fits[i])
            self.trace.best_x = np.array(xs[i], dtype=float)
        self.trace.record(self.calls, self.clock() - self.t0, self.trace.best_objective)


def run_de(objective: Callable, bounds, config: EAConfig, executor=None, clock=None) -> RunTrace:
    """DE/rand/1/bin with greedy one-to-one replacement."""
    lo, hi = _box(bounds)
    dim = lo.size
    lam = config.population
    generations = config.budget // lam
    if generations < 1:
        raise InvalidArgument(f"budget {config.budget} is smaller than the population {lam}")
    rng = run_rng(config.seed, "de")
    tr = _Tracker(clock)

    pop = lo + rng.random((lam, dim)) * (hi - lo)
    fit = _evaluate(objective, pop, executor)
    tr.update(pop, fit)
    others = np.array([[j for j in range(lam) if j != i] for i in range(lam)])
    for _ in range(1, generations):
        picks = np.array([rng.choice(others[i], 3, replace=False) for i in range(lam)])
        mutant = pop[picks[:, 0]] + config.de_F * (pop[picks[:, 1]] - pop[picks[:, 2]])
        cross = rng.random((lam, dim)) < config.de_Pcr
        cross[np.arange(lam), rng.integers(dim, size=lam)] = True
        trial = np.clip(np.where(cross, mutant, pop), lo, hi)
        tfit = _evaluate(objective, trial, executor)
        better = tfit >= fit
        pop[better] = trial[better]
        fit[better] = tfit[better]
        tr.update(trial, tfit)
    return tr.trace


def run_pso(objective: Callable, bounds, config: EAConfig, executor=None, clock=None) -> RunTrace:
    """Global-best PSO, inertia decreasing linearly, velocities clamped per coordinate."""
    lo, hi = _box(bounds)
    dim = lo.size
    lam = config.population
    generations = config.budget // lam
    if generations < 1:
        raise InvalidArgument(f"budget {config.budget} is smaller than the swarm {lam}")
    rng = run_rng(config.seed, "pso")
    tr = _Tracker(clock)
    vmax = config.pso_vmax_fraction * (hi - lo)

    x = lo + rng.random((lam, dim)) * (hi - lo)
    v = rng.uniform(-vmax, vmax, (lam, dim))
    fit = _evaluate(objective, x, executor)
    tr.update(x, fit)
    pbest, pfit = x.copy(), fit.copy()
    g = int(np.argmax(pfit))
    updates = generations - 1
    max_speed = float(np.max(np.abs(v) / vmax))
    for t in range(updates):
        frac = t / (updates - 1) if updates > 1 else 1.0
        w = config.pso_inertia_start + (config.pso_inertia_end - config.pso_inertia_start) * frac
        r1 = rng.random((lam, dim))
        r2 = rng.random((lam, dim))
        v = w * v + config.pso_c1 * r1 * (pbest - x) + config.pso_c2 * r2 * (pbest[g] - x)
        v = np.clip(v, -vmax, vmax)
        max_speed = max(max_speed, float(np.max(np.abs(v) / vmax)))
        x = np.clip(x + v, lo, hi)
        fit = _evaluate(objective, x, executor)
        improved = fit > pfit
        pbest[improved] = x[improved]
        pfit[improved] = fit[improved]
        g = int(np.argmax(pfit))
        tr.update(x, fit)
    tr.trace.extras["max_speed_fraction"] = max_speed
    tr.trace.extras["final_inertia"] = w if updates else config.pso_inertia_start
    return tr.trace


def run_cmaes(objective: Callable, bounds, config: EAConfig, executor=None, clock=None) -> RunTrace:
    """(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu updates.

    Works in coordinates normalized to the unit box, so the initial step
    ``cmaes_sigma_fraction`` is a fraction of each coordinate's range.
    """
    lo, hi = _box(bounds)
    n = lo.size
    lam = config.population
    generations = config.budget // lam
    if generations < 1:
        raise InvalidArgument(f"budget {config.budget} is smaller than the population {lam}")
    rng = run_rng(config.seed, "cmaes")
    tr = _Tracker(clock)
    span = hi - lo

    mu = lam // 2
    weights = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mueff = 1.0 / np.sum(weights**2)
    cs = (mueff + 2) / (n + mueff + 5)
    ds = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    chin = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    sigma0 = config.cmaes_sigma_fraction

    mean = rng.random(n)
    sigma = sigma0
    cov = np.eye(n)
    basis, scales = np.eye(n), np.ones(n)
    ps, pc = np.zeros(n), np.zeros(n)
    restarts = 0
    min_eig, max_asym = [], []

    for gen in range(generations):
        z = rng.standard_normal((lam, n))
        y = (z * scales) @ basis.T
        cand = mean + sigma * y
        phys = lo + np.clip(cand, 0.0, 1.0) * span
        fit = _evaluate(objective, phys, executor)
        tr.update(phys, fit)

        order = np.argsort(-fit, kind="stable")[:mu]
        old = mean
        mean = weights @ cand[order]
        step = (mean - old) / sigma
        inv_sqrt = basis @ np.diag(1.0 / scales) @ basis.T
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (inv_sqrt @ step)
        norm_ps = np.linalg.norm(ps)
        hsig = norm_ps / math.sqrt(1 - (1 - cs) ** (2 * (gen + 1))) / chin < 1.4 + 2 / (n + 1)
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * step
        art = (cand[order] - old) / sigma
        cov = (
            (1 - c1 - cmu) * cov
            + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * cov)
            + cmu * (art.T * weights) @ art
        )
        sigma *= math.exp((cs / ds) * (norm_ps / chin - 1))
        cov = 0.5 * (cov + cov.T)
        max_asym.append(float(np.max(np.abs(cov - cov.T))))
        ok = np.all(np.isfinite(cov)) and math.isfinite(sigma)
        if ok:
            evals, basis = np.linalg.eigh(cov)
            ok = evals.min() > 0
        if not ok:
            restarts += 1
            log.warning("CMA-ES covariance lost positive definiteness; restart %d from current mean", restarts)
            cov, basis, evals = np.eye(n), np.eye(n), np.ones(n)
            ps, pc, sigma = np.zeros(n), np.zeros(n), sigma0
            mean = np.clip(mean, 0.0, 1.0)
        min_eig.append(float(evals.min()))
        scales = np.sqrt(evals)
    tr.trace.extras.update(restarts=restarts, min_eigenvalue=min_eig, max_asymmetry=max_asym)
    return tr.trace


def mutation_mask(rng, n_children: int, n_genes: int, n_buoys: int, rate: float) -> np.ndarray:
    """Select whole buoys (coordinate pairs) for mutation, each with probability ``rate``."""
    buoys = rng.random((n_children, n_buoys)) < rate
    return np.repeat(buoys, 2, axis=1)[:, :n_genes]


def run_mu_plus_lambda(objective: Callable, bounds, config: EAConfig, executor=None, clock=None) -> RunTrace:
    """Elitist (mu+lambda)EA mutating each buoy with probability 1/N."""
    lo, hi = _box(bounds)
    dim = lo.size
    mu, lam = config.mu, config.population
    if config.budget < mu:
        raise InvalidArgument(f"budget {config.budget} is smaller than mu={mu}")
    rng = run_rng(config.seed, "mu-lambda")
    tr = _Tracker(clock)
    n_buoys = (dim + 1) // 2
    sigma = config.mutation_sigma_fraction * (hi - lo)

    pop = lo + rng.random((mu, dim)) * (hi - lo)
    fit = _evaluate(objective, pop, executor)
    tr.update(pop, fit)
    best_per_gen = [float(fit.max())]
    for _ in range((config.budget - mu) // lam):
        parents = rng.integers(mu, size=lam)
        mask = mutation_mask(rng, lam, dim, n_buoys, 1.0 / n_buoys)
        noise = rng.standard_normal((lam, dim)) * sigma
        children = np.clip(pop[parents] + mask * noise, lo, hi)
        cfit = _evaluate(objective, children, executor)
        tr.update(children, cfit)
        pool = np.vstack([pop, children])
        pool_fit = np.concatenate([fit, cfit])
        keep = np.argsort(-pool_fit, kind="stable")[:mu]
        pop, fit = pool[keep], pool_fit[keep]
        best_per_gen.append(float(fit[0]))
    tr.trace.extras["best_per_generation"] = best_per_gen
    return tr.trace


RUNNERS = {"de": run_de, "pso": run_pso, "cmaes": run_cmaes, "mu-lambda": run_mu_plus_lambda}
