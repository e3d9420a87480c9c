"""Command-line entry point: ``wecfarm run``, ``wecfarm compare`` and ``wecfarm scenario validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, InvalidArgument, NumericFailure, WecFarmError
from .harness import METHODS, ExperimentPlan, load_compare_plan, run_comparison, run_experiment, summarize
from .hydro import load_scenario

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "yes", "1"):
        return True
    if text.lower() in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


def _key_value(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("none", "fill") else int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wecfarm", description="Wave energy converter farm layout optimization.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="repeat one method over consecutive seeds")
    run.add_argument("--scenario", required=True, help="bundled scenario name or JSON file")
    run.add_argument("--method", required=True, choices=METHODS)
    run.add_argument("--strategy", default="s4", choices=["s1", "s2", "s3", "s4"])
    run.add_argument("--backtrack", type=_on_off, default=True, metavar="on|off")
    run.add_argument("--budget", type=int, default=6000, help="simulator calls per run")
    run.add_argument("--runs", type=int, default=10)
    run.add_argument("--seed", type=int, default=0, help="seed of the first run")
    run.add_argument("--threads", type=int, default=1, help="runs executed concurrently")
    run.add_argument("--buoys", type=int, default=16)
    run.add_argument("--out", help="output directory for CSV and JSON files")
    run.add_argument("--no-wall-time", dest="wall_time", action="store_false",
                     help="write nan instead of seconds so outputs are reproducible")
    run.add_argument("--ea-param", type=_key_value, action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--sls-res", type=float, default=3.0, help="sector width in degrees")
    run.add_argument("--sls-r1", type=float, default=0.0)
    run.add_argument("--sls-r2", type=float, default=20.0)
    run.add_argument("--lsnm-ns", type=int, default=25, help="Nelder-Mead iterations per buoy")
    run.add_argument("--lsnm-samples", type=int, default=120)
    run.add_argument("--lsnm-sigma", type=float, default=70.0)
    run.add_argument("--bo-iters", type=_optional_int, default=500,
                     help="backtracking iterations, or 'fill' to use the remaining budget")
    run.add_argument("--bo-sigma-mode", choices=["increasing", "decreasing"], default="increasing")
    run.add_argument("--gwo-pack", type=int, default=8)
    run.add_argument("--gwo-iters", type=int, default=10)
    run.add_argument("--gwo-folds", type=int, default=3)

    cmp_ = sub.add_parser("compare", help="run several methods on shared seeds and rank them")
    cmp_.add_argument("--plan", required=True, help="JSON comparison plan")

    scen = sub.add_parser("scenario", help="scenario utilities")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    val = scen_sub.add_parser("validate", help="parse and check a scenario file")
    val.add_argument("file")
    return parser


def _plan_from_args(args) -> ExperimentPlan:
    return ExperimentPlan(
        scenario=args.scenario, method=args.method, strategy=args.strategy, backtrack=args.backtrack,
        runs=args.runs, budget=args.budget, seed=args.seed, out=args.out, threads=args.threads,
        buoys=args.buoys, wall_time=args.wall_time, ea_params=dict(args.ea_param),
        sls_res=args.sls_res, sls_r1=args.sls_r1, sls_r2=args.sls_r2,
        lsnm_ns=args.lsnm_ns, lsnm_samples=args.lsnm_samples, lsnm_sigma=args.lsnm_sigma,
        bo_iters=args.bo_iters, bo_sigma_mode=args.bo_sigma_mode,
        gwo_pack=args.gwo_pack, gwo_iters=args.gwo_iters, gwo_folds=args.gwo_folds,
    )


def _print_summary(label, scenario, records, out):
    s = summarize(records)
    print(f"{label} on {scenario}: {len(records)} runs", file=out)
    print(f"  max {s.max:.1f} W  min {s.min:.1f} W  mean {s.mean:.1f} W  median {s.median:.1f} W  std {s.std:.1f} W",
          file=out)


def cmd_run(args) -> int:
    plan = _plan_from_args(args)
    records = run_experiment(plan)
    _print_summary(plan.label, plan.scenario, records, sys.stdout)
    for r in records:
        extra = " (partial)" if r.partial else ""
        print(f"  seed {r.seed}: {r.objective:.1f} W, {r.calls} calls{extra}")
    return EXIT_OK


def cmd_compare(args) -> int:
    plans = load_compare_plan(args.plan)
    results, ranks = run_comparison(plans)
    for label, records in results.items():
        _print_summary(label, plans[0].scenario, records, sys.stdout)
    if ranks is not None:
        print("Friedman mean ranks (1 = best):")
        for label, m in zip(results, ranks.mean_ranks):
            print(f"  {label:16s} {m:.3f}")
        print(f"  chi-square {ranks.chi_square:.4f}, p = {ranks.p_value:.4g}")
    return EXIT_OK


def cmd_scenario_validate(args) -> int:
    scenario = load_scenario(args.file)
    print(json.dumps({"name": scenario.name, "components": len(scenario.components), "valid": True}))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.INFO if args.verbose < 2 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    handlers = {"run": cmd_run, "compare": cmd_compare, "scenario": cmd_scenario_validate}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WecFarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
