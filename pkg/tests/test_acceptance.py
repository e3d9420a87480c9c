"""Acceptance criteria 1 to 12, one test each.

Every test records a PASS or FAIL line that the terminal summary prints
(see ``conftest.py``). Run just this file with::

    python3 -m pytest tests/test_acceptance.py -v
"""

import functools
import math
from fractions import Fraction

import numpy as np
import pytest

from wecfarm.anso import ANSOConfig, BacktrackConfig, SurrogateConfig, backtrack, mutation_probabilities, run_anso, strategy
from wecfarm.core import FarmGeometry, Layout, penalty
from wecfarm.ea import RUNNERS, EAConfig
from wecfarm.harness import ExperimentPlan, friedman_ranks, run_experiment
from wecfarm.hydro import (
    CallCounter,
    Simulator,
    SpectralComponent,
    WaveScenario,
    assemble_coefficients,
    component_power,
    evaluate,
    farm_power,
    load_scenario,
    pto_power,
    solve_response,
)
from wecfarm.seqplace import SLSConfig, run_lsnm
from wecfarm.surrogate import DataSet, tune_and_train

from .conftest import random_feasible_layout
from .test_surrogate import finite_difference_error

RESULTS: list[str] = []

# Surrogate settings used only where a criterion counts simulator calls:
# the model quality never changes how many calls an evaluated placement makes.
CHEAP = SurrogateConfig(
    pack_size=3, iterations=1, box=dict(epochs=(50, 60), hidden=(10, 12), layers=(1, 1), minibatch=(50, 100))
)
CALL_SEEDS = (0, 1, 2)


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS.append(f"criterion {number:2d} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0])
                raise
            RESULTS.append(f"criterion {number:2d} PASS  {title}" + (f": {detail}" if detail else ""))

        return run

    return wrap


@functools.lru_cache(maxsize=None)
def anso_run(name, seed, scenario="perth-like", backtracking=False):
    sim = Simulator(load_scenario(scenario), FarmGeometry(16), CallCounter(limit=6000))
    cfg = ANSOConfig(sls=SLSConfig(res=3), surrogate=CHEAP)
    return run_anso(sim, strategy(name, 16, backtracking), cfg, seed=seed, clock=lambda: 0.0)


@criterion(1, "power identity")
def test_c01_power_identity(perth):
    rng = np.random.default_rng(2024)
    geometry = FarmGeometry(16)
    worst, cases = 0.0, 0
    for case in range(1000):
        n = (1, 2, 4, 8, 16)[case % 5]
        pts = random_feasible_layout(rng, n, geometry)
        comp = SpectralComponent(rng.uniform(0.3, 1.6), rng.uniform(0.1, 2.0), rng.uniform(0, 2 * math.pi), 1.0)
        coeffs = assemble_coefficients(pts, comp, perth)
        resp = solve_response(coeffs, perth.pto_params, perth.buoy.mass, comp.omega)
        p = component_power(coeffs, resp, perth.pto_params)
        ident = float(pto_power(resp, perth.pto_params).sum())
        err = abs(p - ident) / max(1.0, abs(p))
        worst = max(worst, err)
        cases += 1
        assert err <= 1e-9, f"case {case}: N={n} P={p} identity={ident}"
    return f"{cases} cases, worst scaled error {worst:.2e}"


@criterion(2, "isolation limit")
def test_c02_isolation_limit():
    worst = 0.0
    for name in ("sydney-like", "perth-like", "adelaide-like", "tasmania-like"):
        sc = load_scenario(name)
        lam = sc.max_wavelength()
        single = farm_power([(0.0, 0.0)], sc)
        rng = np.random.default_rng(7)
        for _ in range(5):
            pts = []
            while len(pts) < 16:
                p = rng.uniform(0, 200 * lam, 2)
                if all(math.dist(p, q) >= 20 * lam for q in pts):
                    pts.append(p)
            dev = abs(farm_power(np.array(pts), sc) / (16 * single) - 1)
            worst = max(worst, dev)
            assert dev <= 0.01, f"{name}: farm/16 single deviates by {dev:.4f}"
    return f"worst deviation {worst:.2e}"


@criterion(3, "penalty exactness")
def test_c03_penalty_exactness(perth):
    assert penalty(1.0) == 1048576.0
    res = evaluate([(0.0, 0.0), (49.0, 0.0)], perth, FarmGeometry(16))
    assert res.violation_sum == 1.0
    assert res.penalty == 1048576.0
    assert res.objective == res.raw_power - 1048576.0
    return "penalty(1) = 1048576 W"


@criterion(4, "simulator-call accounting")
def test_c04_call_accounting():
    expected = {"s4": 1831, "s1": 977, "s2": 733}
    seen, estim_fallbacks = [], 0
    for name, calls in expected.items():
        for seed in CALL_SEEDS:
            tr = anso_run(name, seed)
            # simulator fallbacks add calls; surrogate-branch fallbacks add none
            assert tr.extras["fallback_calls"] == 0, f"{name} seed {seed} needed a simulator fallback"
            estim_fallbacks += tr.extras["fallbacks"]
            assert not tr.extras["partial"]
            got = tr.extras["pre_backtrack_calls"]
            assert got == calls, f"{name} seed {seed}: {got} calls, expected {calls}"
        seen.append(f"{name.upper()}={calls}")
    return ", ".join(seen) + f" for seeds {list(CALL_SEEDS)} ({estim_fallbacks} zero-call surrogate fallbacks)"


@criterion(5, "efficiency ordering")
def test_c05_efficiency_ordering():
    seed = 0
    s1, s2, s3, s4 = (anso_run(s, seed).calls for s in ("s1", "s2", "s3", "s4"))
    sim = Simulator(load_scenario("perth-like"), FarmGeometry(16), CallCounter(limit=6000))
    lsnm = run_lsnm(sim, seed=seed, clock=lambda: 0.0).calls
    (ea,) = run_experiment(ExperimentPlan("perth-like", "mu-lambda", runs=1, budget=6000, seed=seed, wall_time=False))
    chain = f"S2 {s2} < S1 {s1} = S3 {s3} < S4 {s4} < LS-NM {lsnm} < (mu+lambda)EA {ea.calls}"
    assert s2 < s1 == s3 < s4 < lsnm < ea.calls, chain
    return chain


@criterion(6, "quality direction")
def test_c06_quality_direction():
    means = {}
    for method in ("anso", "pso", "de", "lsnm"):
        plan = ExperimentPlan("perth-like", method, strategy="s4", backtrack=True, runs=10, budget=6000, wall_time=False)
        records = run_experiment(plan)
        assert all(r.calls <= 6000 for r in records)
        means[plan.label] = float(np.mean([r.objective for r in records]))
    text = ", ".join(f"{k} {v:.0f} W" for k, v in means.items())
    anso = means["ANSO-S4-B"]
    assert anso >= means["PSO"] and anso >= means["DE"] and anso >= means["LS-NM"], text
    return text


def _first_three_evaluated(trace) -> DataSet:
    ds = trace.extras["dataset"]
    keep = sorted(p for p in ds.provenance() if p >= 2)[:3]
    return DataSet(ds.side, [s for s in ds.samples if s.provenance in keep])


@criterion(7, "surrogate fidelity")
def test_c07_surrogate_fidelity():
    # full hyper-parameter box with a smaller pack, see README
    rs = []
    for seed in CALL_SEEDS:
        data = _first_three_evaluated(anso_run("s1", seed))
        assert data.provenance() == [2, 3, 5]
        model = tune_and_train(data, pack_size=4, iterations=3, folds=3, seed=seed)
        rs.append(model.validation_r)
        if sum(r >= 0.7 for r in rs) >= 2:
            break
    text = "held-out R " + ", ".join(f"{r:.3f}" for r in rs)
    assert sum(r >= 0.7 for r in rs) >= 2, text
    return text


@criterion(8, "gradient check")
def test_c08_gradient_check():
    worst = 0.0
    for layers in (1, 2):
        for hidden in (10, 32):
            for steps in (1, 4, 15):
                err = finite_difference_error(layers, hidden, steps)
                worst = max(worst, err)
                assert err <= 1e-4, f"layers={layers} hidden={hidden} T={steps}: {err:.2e}"
    return f"worst relative error {worst:.2e}"


@criterion(9, "backtracking elitism and mutation semantics")
def test_c09_backtracking(perth):
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(2, 17))
        powers = rng.permutation(rng.uniform(5e4, 2e5, n))
        pm = mutation_probabilities(powers)
        assert int(np.argmax(pm)) == int(np.argmin(powers))
    for case in range(200):
        n = int(rng.integers(2, 17))
        geometry = FarmGeometry(n)
        sim = Simulator(perth, geometry)
        layout = Layout(random_feasible_layout(rng, n, geometry))
        start = sim.evaluate(layout)
        accepted = []
        out, res, _ = backtrack(layout, sim, BacktrackConfig(iterations=10), rng, start,
                                on_accept=lambda r: accepted.append(r.objective))
        seq = [start.objective, *accepted]
        assert all(b > a for a, b in zip(seq, seq[1:])), f"case {case}: accepted a worse layout"
        assert res.objective >= start.objective
    return "200 mutation cases, 200 backtracking runs"


def _exact_chi_square(table):
    t = np.asarray(table)
    k, n = t.shape
    sums = [Fraction(0)] * k
    for j in range(n):
        for i in range(k):
            better = sum(1 for m in range(k) if t[m, j] > t[i, j])
            ties = sum(1 for m in range(k) if t[m, j] == t[i, j])
            sums[i] += better + Fraction(ties + 1, 2)
    chi = Fraction(12, n * k * (k + 1)) * sum(s * s for s in sums) - 3 * n * (k + 1)
    return [s / n for s in sums], chi


@criterion(11, "Friedman oracle")
def test_c11_friedman_oracle():
    rng = np.random.default_rng(11)
    for case in range(50):
        table = rng.integers(0, 6, (5, 10)).astype(float) if case % 2 else rng.normal(1e6, 1e4, (5, 10))
        res = friedman_ranks(table)
        ranks, chi = _exact_chi_square(table)
        assert res.mean_ranks.tolist() == [float(r) for r in ranks], f"case {case}"
        assert res.chi_square == float(chi), f"case {case}: {res.chi_square} != {float(chi)}"
    return "50 tables, ranks and chi-square identical"


def _neg_sphere(x):
    return -float(np.sum(np.asarray(x) ** 2))


@criterion(10, "baseline sanity")
def test_c10_baseline_sanity():
    box = (np.full(10, -1.0), np.full(10, 1.0))
    found = []
    for method, target in (("de", 1e-6), ("pso", 1e-4), ("cmaes", 1e-8), ("mu-lambda", 1e-3)):
        worst = 0.0
        for seed in range(3):
            calls = [0]

            def f(x, calls=calls):
                calls[0] += 1
                return _neg_sphere(x)

            tr = RUNNERS[method](f, box, EAConfig.for_method(method, budget=20000, seed=seed))
            assert calls[0] <= 20000
            worst = max(worst, -tr.best_objective)
            assert -tr.best_objective < target, f"{method} seed {seed}: {-tr.best_objective:.3g} >= {target}"
        found.append(f"{method} {worst:.1e}")
    return ", ".join(found)


DETERMINISM_PLANS = [
    dict(method="de"),
    dict(method="pso"),
    dict(method="cmaes"),
    dict(method="mu-lambda"),
    dict(method="lsnm", lsnm_samples=30, lsnm_ns=5),
    dict(method="anso", strategy="s4", sls_res=20, bo_iters=30),
    dict(method="anso", strategy="s1", sls_res=20, bo_iters=10, gwo_pack=3, gwo_iters=1, gwo_box=CHEAP.box),
]


@criterion(12, "determinism")
def test_c12_determinism(tmp_path):
    compared = 0
    for k, extra in enumerate(DETERMINISM_PLANS):
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{k}{rep}"
            plan = ExperimentPlan(**{"scenario": "sydney-like", "buoys": 6, "budget": 400, "runs": 2, "seed": 3,
                                     "wall_time": False, "out": str(out), **extra})
            run_experiment(plan)
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        for name in names:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), f"{extra['method']}: {name}"
            compared += 1
    return f"{compared} file pairs byte-identical over {len(DETERMINISM_PLANS)} plans"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
