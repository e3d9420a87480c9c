import numpy as np
import pytest

from wecfarm.core import FarmGeometry
from wecfarm.ea import (
    EAConfig,
    RUNNERS,
    mutation_mask,
    run_cmaes,
    run_de,
    run_mu_plus_lambda,
    run_pso,
    run_rng,
)
from wecfarm.errors import ConfigurationError, InvalidArgument
from wecfarm.hydro import Simulator

BOX = (np.full(10, -1.0), np.full(10, 1.0))


def neg_sphere(x):
    return -float(np.sum(np.asarray(x) ** 2))


def counting(f):
    calls = []

    def wrapped(x):
        calls.append(np.array(x))
        return f(x)

    return wrapped, calls


@pytest.mark.parametrize("method, target", [("de", 1e-6), ("pso", 1e-4), ("cmaes", 1e-8), ("mu-lambda", 1e-3)])
def test_sphere_sanity(method, target):
    tr = RUNNERS[method](neg_sphere, BOX, EAConfig.for_method(method, budget=20000, seed=0))
    assert -tr.best_objective < target


@pytest.mark.parametrize("method", list(RUNNERS))
def test_seed_determinism(method):
    cfg = EAConfig.for_method(method, budget=600, seed=42)
    a = RUNNERS[method](neg_sphere, BOX, cfg)
    b = RUNNERS[method](neg_sphere, BOX, cfg)
    assert a.points and [p[0::2] for p in a.points] == [p[0::2] for p in b.points]
    np.testing.assert_array_equal(a.best_x, b.best_x)


@pytest.mark.parametrize("method", list(RUNNERS))
def test_budget_and_bounds(method):
    f, calls = counting(neg_sphere)
    cfg = EAConfig.for_method(method, budget=997, seed=1)
    tr = RUNNERS[method](f, BOX, cfg)
    assert len(calls) <= 997
    assert len(calls) == tr.calls
    pts = np.array(calls)
    assert np.all(pts >= -1.0) and np.all(pts <= 1.0)
    best = [p[2] for p in tr.points]
    assert all(a <= b for a, b in zip(best, best[1:]))
    assert tr.best_objective == max(neg_sphere(x) for x in calls)


def test_de_exact_budget():
    f, calls = counting(neg_sphere)
    run_de(f, BOX, EAConfig(budget=900, seed=3))
    assert len(calls) == 900


def test_de_budget_equals_population():
    f, calls = counting(neg_sphere)
    tr = run_de(f, BOX, EAConfig(budget=30, seed=3))
    assert len(calls) == 30
    assert len(tr.points) == 1
    assert tr.best_objective == max(neg_sphere(x) for x in calls)


def test_de_budget_too_small():
    with pytest.raises(InvalidArgument):
        run_de(neg_sphere, BOX, EAConfig(budget=10))


def test_pso_velocity_clamp_and_schedule():
    tr = run_pso(neg_sphere, BOX, EAConfig.for_method("pso", budget=3000, seed=5))
    assert tr.extras["max_speed_fraction"] <= 1.0 + 1e-12
    assert tr.extras["final_inertia"] == pytest.approx(0.4)


def test_cmaes_covariance_health():
    tr = run_cmaes(neg_sphere, BOX, EAConfig.for_method("cmaes", budget=6000, seed=2))
    assert max(tr.extras["max_asymmetry"]) <= 1e-12
    assert min(tr.extras["min_eigenvalue"]) > 0
    assert tr.extras["restarts"] == 0


def test_mu_lambda_elitism_and_budget():
    f, calls = counting(neg_sphere)
    tr = run_mu_plus_lambda(f, BOX, EAConfig.for_method("mu-lambda", budget=6000, seed=7))
    assert len(calls) == 6000  # 50 + 238 * 25
    b = tr.extras["best_per_generation"]
    assert all(x <= y for x, y in zip(b, b[1:]))


def test_mutation_mask_binomial_mean():
    rng = np.random.default_rng(0)
    mask = mutation_mask(rng, 40000, 32, 16, 1 / 16)
    buoys = mask[:, ::2]
    assert np.array_equal(mask[:, ::2], mask[:, 1::2])
    assert buoys.sum(axis=1).mean() == pytest.approx(1.0, abs=0.02)


def test_rng_streams_differ_by_tag():
    assert run_rng(1, "de").random() != run_rng(1, "pso").random()
    assert run_rng(1, "de").random() == run_rng(1, "de").random()


def test_config_overrides():
    cfg = EAConfig.for_method("de").with_params({"de_F": "0.7", "population": "40"})
    assert cfg.de_F == 0.7 and cfg.population == 40
    assert EAConfig.for_method("mu-lambda").population == 25
    with pytest.raises(ConfigurationError):
        cfg.with_params({"nope": "1"})
    with pytest.raises(ConfigurationError):
        cfg.with_params({"de_Pcr": "2"})
    with pytest.raises(InvalidArgument):
        EAConfig(method="de", population=3)


def test_layout_objective_runs(perth):
    g = FarmGeometry(4)
    sim = Simulator(perth, g)
    tr = run_de(sim.objective, g.bounds(), EAConfig(budget=120, seed=0))
    assert sim.calls == 120
    assert tr.best_x.shape == (8,)
