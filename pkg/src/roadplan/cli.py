"""Command line interface.

    roadplan plan      --scenario F --planner reach|frenet [--config C] --out sol.json
    roadplan check     --scenario F --solution S
    roadplan evaluate  --scenario F --solution S
    roadplan benchmark --dir D [--planners reach,frenet] [--budget-s N]
                       [--workers K] --out leaderboard.csv --results results.csv
                       [--reactive]
    roadplan plot      --results results.csv --out fig.svg

Exit codes: 0 success, 1 usage error, 2 input error, 3 no solution /
infeasible result.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .drivability import check_drivability, evaluate_cost
from .dynamics import Trajectory
from .errors import PlanningFailure, TimeoutExceeded
from .geometry import GeometryError
from .route import RouteError, route_reference
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NO_SOLUTION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="roadplan", description="road motion planning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="run one planner on one scenario")
    p_plan.add_argument("--scenario", required=True)
    p_plan.add_argument("--planner", required=True, choices=("reach", "frenet"))
    p_plan.add_argument("--config")
    p_plan.add_argument("--out", required=True)
    p_plan.add_argument("--budget-s", type=float, default=60.0)

    p_check = sub.add_parser("check", help="feasibility-check a solution")
    p_check.add_argument("--scenario", required=True)
    p_check.add_argument("--solution", required=True)
    p_check.add_argument("--config")

    p_eval = sub.add_parser("evaluate", help="cost of a feasible solution")
    p_eval.add_argument("--scenario", required=True)
    p_eval.add_argument("--solution", required=True)
    p_eval.add_argument("--config")

    p_bench = sub.add_parser("benchmark", help="run planners over a scenario corpus")
    p_bench.add_argument("--dir", required=True)
    p_bench.add_argument("--planners", default="reach,frenet")
    p_bench.add_argument("--budget-s", type=float, default=60.0)
    p_bench.add_argument("--workers", type=int, default=2)
    p_bench.add_argument("--out", required=True, help="leaderboard csv path")
    p_bench.add_argument("--results", required=True, help="per-run results csv path")
    p_bench.add_argument("--config")
    p_bench.add_argument("--reactive", action="store_true")

    p_plot = sub.add_parser("plot", help="cost comparison chart from results csv")
    p_plot.add_argument("--results", required=True)
    p_plot.add_argument("--out", required=True)
    return parser


def _load_config_data(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path) as fh:
        return json.load(fh)


def _load_solution(path: str) -> Trajectory:
    with open(path) as fh:
        return Trajectory.from_solution_dict(json.load(fh))


def _cmd_plan(args) -> int:
    from .harness import HarnessConfig, run_planner_on_scenario

    sc = load_scenario(args.scenario)
    cfg_data = _load_config_data(args.config)
    cfg = HarnessConfig.from_dict(cfg_data) if cfg_data else HarnessConfig()
    result = run_planner_on_scenario(args.planner, sc, args.budget_s, cfg)
    if result.status != "solved":
        print(f"{result.status}: {result.detail}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    doc = result.trajectory.to_solution_dict(sc.scenario_id, args.planner)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"solved: {len(result.trajectory)} states, cost {result.cost.total:.4f}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .harness import HarnessConfig

    sc = load_scenario(args.scenario)
    cfg_data = _load_config_data(args.config)
    cfg = HarnessConfig.from_dict(cfg_data) if cfg_data else HarnessConfig()
    traj = _load_solution(args.solution)
    report = check_drivability(traj, sc, cfg.vehicle, exact_roads=cfg.exact_road_check)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.feasible else EXIT_NO_SOLUTION


def _cmd_evaluate(args) -> int:
    from .harness import HarnessConfig

    sc = load_scenario(args.scenario)
    cfg_data = _load_config_data(args.config)
    cfg = HarnessConfig.from_dict(cfg_data) if cfg_data else HarnessConfig()
    traj = _load_solution(args.solution)
    report = check_drivability(traj, sc, cfg.vehicle, exact_roads=cfg.exact_road_check)
    if not report.feasible:
        print(json.dumps(report.to_dict(), indent=2), file=sys.stderr)
        return EXIT_NO_SOLUTION
    _, frame = route_reference(sc)
    cost = evaluate_cost(traj, sc, frame, cfg.vehicle)
    print(json.dumps(cost.to_dict(), indent=2))
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    from .harness import build_leaderboard, leaderboard_csv, results_csv, run_benchmark

    directory = Path(args.dir)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        print(f"no scenario files in {directory}", file=sys.stderr)
        return EXIT_INPUT
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    cfg_data = _load_config_data(args.config)
    results = run_benchmark(paths, planners, args.budget_s, workers=args.workers,
                            cfg_data=cfg_data, reactive=args.reactive)
    Path(args.results).write_text(results_csv(results))
    entries = build_leaderboard(results)
    Path(args.out).write_text(leaderboard_csv(entries))
    for e in entries:
        print(f"{e.planner_id}: solved {e.solved}, top-1 {e.top1}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .svgplot import PlotError, emit_cost_plot

    with open(args.results, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        svg = emit_cost_plot(rows)
    except PlotError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    Path(args.out).write_text(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "plan": _cmd_plan,
    "check": _cmd_check,
    "evaluate": _cmd_evaluate,
    "benchmark": _cmd_benchmark,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, GeometryError, RouteError, FileNotFoundError,
            json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PlanningFailure, TimeoutExceeded) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION


if __name__ == "__main__":
    sys.exit(main())
