import csv
import itertools
import json
import math

import numpy as np
import pytest

from wecfarm.core import FarmGeometry, load_layout
from wecfarm.errors import ConfigurationError, InvalidArgument
from wecfarm.ea import RunTrace
from wecfarm.harness import (
    SUMMARY_COLUMNS,
    ExperimentPlan,
    RunRecord,
    friedman_ranks,
    load_compare_plan,
    plan_from_dict,
    run_comparison,
    run_experiment,
    summarize,
    write_trace,
)
from wecfarm.hydro import Simulator


def brute_force_friedman(table):
    """Ranks by counting strictly better and tied entries per column."""
    t = np.asarray(table, dtype=float)
    k, n = t.shape
    ranks = np.zeros((k, n))
    for j in range(n):
        for i in range(k):
            better = sum(t[m, j] > t[i, j] for m in range(k))
            ties = sum(t[m, j] == t[i, j] for m in range(k))
            ranks[i, j] = better + (ties + 1) / 2
    r = ranks.sum(axis=1)
    chi = 12 / (n * k * (k + 1)) * sum(x * x for x in r) - 3 * n * (k + 1)
    return ranks.mean(axis=1), chi


def test_summarize_examples():
    s = summarize([5.0, 5.0, 5.0])
    assert (s.max, s.min, s.mean, s.median, s.std) == (5, 5, 5, 5, 0)
    assert summarize([1.0, 2.0, 3.0, 4.0]).median == 2.5
    s = summarize([2, 4, 4, 4, 5, 5, 7, 9])
    assert s.mean == 5.0
    assert s.std == pytest.approx(math.sqrt(32 / 7), rel=1e-12)
    assert summarize([3.0]).std == 0.0
    with pytest.raises(InvalidArgument):
        summarize([])


def test_friedman_simple_cases():
    res = friedman_ranks([[3, 3, 3], [1, 1, 1]])
    assert res.mean_ranks.tolist() == [1.0, 2.0]
    res = friedman_ranks([[2, 5], [2, 1]])
    assert res.mean_ranks.tolist() == [1.25, 1.75]
    with pytest.raises(InvalidArgument):
        friedman_ranks([[1, 2], [3]])
    with pytest.raises(InvalidArgument):
        friedman_ranks([[1, 2]])


def test_friedman_textbook_block():
    # 3 methods x 4 blocks, rank sums 4, 8, 12
    table = [[9, 8, 7, 9], [5, 6, 4, 5], [1, 2, 3, 1]]
    res = friedman_ranks(table)
    assert res.mean_ranks.tolist() == [1.0, 2.0, 3.0]
    assert res.chi_square == pytest.approx(12 / (4 * 3 * 4) * (16 + 64 + 144) - 3 * 4 * 4, abs=1e-12)
    assert res.chi_square == pytest.approx(8.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_friedman_matches_brute_force_with_ties(seed):
    rng = np.random.default_rng(seed)
    table = rng.integers(0, 4, (5, 10)).astype(float)
    res = friedman_ranks(table)
    ranks, chi = brute_force_friedman(table)
    assert np.array_equal(res.mean_ranks, ranks)
    assert res.chi_square == pytest.approx(chi, rel=1e-12, abs=1e-12)
    assert res.mean_ranks.mean() == pytest.approx(3.0)


def test_plan_validation():
    with pytest.raises(ConfigurationError) as info:
        ExperimentPlan(scenario="perth-like", method="ga")
    assert info.value.field == "method"
    with pytest.raises(ConfigurationError) as info:
        ExperimentPlan(scenario="perth-like", method="de", runs=0)
    assert info.value.field == "runs"
    with pytest.raises(ConfigurationError):
        ExperimentPlan(scenario="perth-like", method="de", budget=10)
    with pytest.raises(ConfigurationError):
        ExperimentPlan(scenario="perth-like", method="de", ea_params={"nope": 1})
    with pytest.raises(ConfigurationError):
        ExperimentPlan(scenario="perth-like", method="anso", strategy="s9")
    assert ExperimentPlan(scenario="x", method="anso", strategy="s1", backtrack=False).label == "ANSO-S1"
    assert ExperimentPlan(scenario="x", method="mu-lambda").label == "(mu+lambda)EA"


def test_plan_from_dict_names_field():
    with pytest.raises(ConfigurationError) as info:
        plan_from_dict({"scenario": "perth-like", "method": "de", "colour": 1})
    assert info.value.field == "colour"
    with pytest.raises(ConfigurationError) as info:
        plan_from_dict({"method": "de"})
    assert info.value.field == "scenario"


def _small(method, **kw):
    base = dict(scenario="perth-like", method=method, buoys=4, budget=200, runs=2, wall_time=False)
    base.update(kw)
    return ExperimentPlan(**base)


def test_run_experiment_seeds_and_budget(tmp_path):
    plan = _small("pso", runs=3, seed=7, out=str(tmp_path))
    records = run_experiment(plan)
    assert [r.seed for r in records] == [7, 8, 9]
    assert all(r.calls <= plan.budget for r in records)
    for r in records:
        best = [p[2] for p in r.trace.points]
        assert best == sorted(best)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["layout_7.json", "layout_8.json", "layout_9.json", "summary.csv",
                     "trace_7.csv", "trace_8.csv", "trace_9.csv"]


def test_export_columns_and_round_trip(tmp_path, perth):
    plan = _small("lsnm", runs=1, budget=400, lsnm_samples=20, lsnm_ns=5, out=str(tmp_path))
    (rec,) = run_experiment(plan)
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[1][:2] == ["LS-NM", "perth-like"] and rows[1][-1] == "nan"
    with open(tmp_path / "trace_0.csv") as fh:
        assert fh.readline() == "calls,seconds,best_watts\n"
    layout = load_layout(tmp_path / "layout_0.json")
    again = Simulator(perth, FarmGeometry(n=4)).evaluate(layout).objective
    assert again == pytest.approx(rec.objective, rel=1e-9)


def test_empty_trace_is_header_only(tmp_path):
    path = write_trace(RunTrace(), tmp_path / "t.csv")
    assert path.read_text() == "calls,seconds,best_watts\n"


def test_threads_do_not_change_results(tmp_path):
    a = run_experiment(_small("de", runs=3, out=str(tmp_path / "a")))
    b = run_experiment(_small("de", runs=3, threads=3, out=str(tmp_path / "b")))
    assert [r.objective for r in a] == [r.objective for r in b]
    for name in ("summary.csv", "trace_1.csv", "layout_2.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_compare_plan(tmp_path):
    doc = {"scenario": "perth-like", "budget": 150, "runs": 2, "buoys": 4, "wall_time": False,
           "out": str(tmp_path / "cmp"), "methods": [{"method": "de"}, {"method": "pso"}]}
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(doc))
    plans = load_compare_plan(path)
    results, ranks = run_comparison(plans)
    assert list(results) == ["DE", "PSO"]
    assert ranks.mean_ranks.sum() == pytest.approx(3.0)
    assert (tmp_path / "cmp" / "ranks.csv").read_text().startswith("method,mean_rank,chi_square,p_value\n")
    assert (tmp_path / "cmp" / "DE" / "trace_0.csv").exists()


def test_compare_plan_rejects_per_method_budget(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(json.dumps({"scenario": "perth-like", "methods": [{"method": "de", "budget": 5}]}))
    with pytest.raises(ConfigurationError) as info:
        load_compare_plan(path)
    assert info.value.field == "methods[0].budget"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_compare_plan(path)


def test_record_fields():
    fields = set(RunRecord.__dataclass_fields__)
    assert {"seed", "trace", "layout", "seconds", "calls", "fallbacks", "surrogate_r"} <= fields


def test_brute_force_oracle_itself():
    # all permutations of 3 distinct values give mean rank 2 per method
    table = np.array(list(itertools.permutations([1.0, 2.0, 3.0]))).T
    ranks, _ = brute_force_friedman(table)
    assert np.allclose(ranks, 2.0)
