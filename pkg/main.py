#!/usr/bin/env python3
"""
Eco-Lane Planner - command line

  plan      one plan from the scenario's initial state
  simulate  closed-loop run(s), SimLog JSON + tick CSV
  bench     heuristic comparison over seeded perturbations
  heatmap   cost-to-go map as CSV
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import psutil

import config
from config import get_logger, resolve_scenario_path
from errors import PlannerError, SimulationAbort
from heuristic import HEURISTIC_KINDS
from sim import (
    PERCEPTION_MODES,
    load_scenario,
    plan_once,
    run,
    scenario_heuristic,
    summarize,
    trajectory_rows,
    write_rows_csv,
)

logger = get_logger("CLI")

# Parameters
DEFAULT_PERTURB_S = 2.0  # m
DEFAULT_PERTURB_V = 0.5  # m/s
SEGMENT_COLUMNS = ("t_start", "t_end", "s_start", "s_end", "v_start", "v_end", "l_start", "l_end", "a", "cost")
TREE_COLUMNS = ("t", "s", "l", "v", "g", "f", "key", "parent")


def fmt(x):
    return f"{x:.6g}"


def build_parser():
    parser = argparse.ArgumentParser(prog="eco-planner", description="Energy-optimal space-time lane planner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, many_heuristics=False):
        p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
        p.add_argument("--output", type=Path, default=None, help="output directory")
        if many_heuristics:
            p.add_argument("--heuristic", action="append", choices=HEURISTIC_KINDS, default=None)
        else:
            p.add_argument("--heuristic", choices=HEURISTIC_KINDS, default=None)

    p_plan = sub.add_parser("plan", help="plan once from the initial state")
    common(p_plan)
    p_plan.add_argument("--dump-tree", action="store_true", help="also write the expanded search tree")

    p_sim = sub.add_parser("simulate", help="closed-loop simulation")
    common(p_sim)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--perturb-s", type=float, default=0.0)
    p_sim.add_argument("--perturb-v", type=float, default=0.0)
    p_sim.add_argument("--perception", choices=PERCEPTION_MODES, default=None)
    p_sim.add_argument("--lane-keeping", action="store_true", help="forbid lane changes")
    p_sim.add_argument("--timing", action="store_true", help="include planning wall times in the log")

    p_bench = sub.add_parser("bench", help="compare heuristics over seeded perturbations")
    common(p_bench, many_heuristics=True)
    p_bench.add_argument("--seed", type=int, default=0, help="first seed")
    p_bench.add_argument("--repeats", type=int, default=20)
    p_bench.add_argument("--perturb-s", type=float, default=DEFAULT_PERTURB_S)
    p_bench.add_argument("--perturb-v", type=float, default=DEFAULT_PERTURB_V)
    p_bench.add_argument("--workers", type=int, default=1)

    p_map = sub.add_parser("heatmap", help="write the cost-to-go map")
    p_map.add_argument("--scenario", required=True)
    p_map.add_argument("--output", type=Path, default=None)
    return parser


def _output_dir(args):
    out = args.output or config.OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(args):
    sc = load_scenario(resolve_scenario_path(args.scenario))
    result = plan_once(sc, args.heuristic, dump_tree=args.dump_tree)
    out = _output_dir(args)
    kind = args.heuristic or sc.planner.heuristic_kind
    path = out / f"{sc.name}_{kind}_plan.csv"
    write_rows_csv(path, trajectory_rows(result.trajectory), SEGMENT_COLUMNS)
    if args.dump_tree:
        rows = [
            {"t": r.t, "s": r.s, "l": r.l, "v": r.v, "g": r.g, "f": r.f,
             "key": "/".join(str(int(x)) for x in r.key),
             "parent": "/".join(str(int(x)) for x in r.parent) if r.parent else ""}
            for r in result.tree
        ]
        write_rows_csv(out / f"{sc.name}_{kind}_tree.csv", rows, TREE_COLUMNS)
    end = result.trajectory.state_at(result.trajectory.t_end)
    print(
        f"{sc.name} [{kind}] {result.termination.value}: nodes={result.nodes_expanded} "
        f"cost={fmt(result.trajectory.total_cost / 1000.0)} kJ objective={fmt(result.objective / 1000.0)} kJ "
        f"end t={fmt(end.t)} s={fmt(end.s)} l={fmt(end.l)} v={fmt(end.v)}"
    )
    print(f"trajectory written to {path}")
    return 1 if result.failed else 0


def cmd_simulate(args):
    path = resolve_scenario_path(args.scenario)
    sc = load_scenario(path)
    kind = args.heuristic or sc.planner.heuristic_kind
    seed = sc.seed if args.seed is None else args.seed
    perturb = (args.perturb_s, args.perturb_v) if (args.perturb_s or args.perturb_v) else None
    out = _output_dir(args)
    stem = f"{sc.name}_{kind}_seed{seed}" + ("_lk" if args.lane_keeping else "")
    status = 0
    try:
        log = run(sc, kind, perturb=perturb, seed=seed, perception=args.perception, lane_keeping=args.lane_keeping)
    except SimulationAbort as e:
        log = e.log
        status = 1
    if log is None:
        return 1
    (out / f"{stem}.json").write_text(log.to_json(include_timing=args.timing), encoding="utf-8")
    log.write_ticks_csv(out / f"{stem}_ticks.csv")
    m = log.metrics()
    print(
        f"{sc.name} [{kind}] seed={seed}: {log.outcome} cost={fmt(m['total_cost_kj'])} kJ "
        f"time={fmt(m['travel_time'])} s cycles={m['cycles']} fallbacks={m['fallbacks']}"
    )
    return status


def _bench_job(job):
    path, kind, seed, perturb = job
    sc = load_scenario(path)
    try:
        return kind, seed, run(sc, kind, perturb=perturb, seed=seed), None
    except SimulationAbort as e:
        return kind, seed, e.log, str(e)


def host_line():
    mem = psutil.virtual_memory()
    return f"host: {psutil.cpu_count(logical=True)} cpus, {fmt(mem.total / 2 ** 30)} GiB memory"


def format_table(rows):
    """rows: (kind, summary) pairs; mean ± std per column."""
    header = f"{'heuristic':<10}{'planning time [ms]':>24}{'nodes':>20}{'cost [kJ]':>22}{'travel time [s]':>22}"
    lines = [header, "-" * len(header)]
    for kind, summary in rows:
        def cell(key, scale=1.0):
            mean, std = summary[key]
            return f"{fmt(mean * scale)} ± {fmt(std * scale)}"

        lines.append(
            f"{kind:<10}{cell('planning_time', 1000.0):>24}{cell('nodes'):>20}"
            f"{cell('cost_kj'):>22}{cell('travel_time'):>22}"
        )
    return "\n".join(lines)


def cmd_bench(args):
    if args.repeats < 1:
        logger.error("--repeats must be at least 1")
        return 2
    path = resolve_scenario_path(args.scenario)
    kinds = args.heuristic or ["dp", "mb"]
    perturb = (args.perturb_s, args.perturb_v)
    jobs = [(path, kind, args.seed + i, perturb) for kind in kinds for i in range(args.repeats)]
    print(host_line())

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_bench_job, jobs))
    else:
        results = [_bench_job(job) for job in jobs]
    results.sort(key=lambda r: (kinds.index(r[0]), r[1]))

    out = _output_dir(args)
    status = 0
    table = []
    csv_rows = []
    for kind in kinds:
        logs = []
        for k, seed, log, error in results:
            if k != kind:
                continue
            if error or not log.completed:
                logger.error(f"{kind} seed={seed}: {error or log.outcome}")
                status = 1
            logs.append(log)
            m = log.metrics(include_timing=True)
            csv_rows.append({"heuristic": kind, "seed": seed, "outcome": log.outcome, **m})
        table.append((kind, summarize(logs)))
    print(format_table(table))
    name = Path(path).stem
    columns = ("heuristic", "seed", "outcome", "total_cost_kj", "travel_time", "cycles", "fallbacks",
               "nodes_mean", "nodes_std", "planning_time_mean", "planning_time_std")
    write_rows_csv(out / f"{name}_bench.csv", csv_rows, columns)

    if len(table) >= 2 and "dp" in kinds and "mb" in kinds:
        nodes = {kind: np.median([r["nodes_mean"] for r in csv_rows if r["heuristic"] == kind]) for kind in ("dp", "mb")}
        if nodes["dp"] > 0:
            print(f"median nodes ratio mb/dp: {fmt(nodes['mb'] / nodes['dp'])}")
    return status


def cmd_heatmap(args):
    sc = load_scenario(resolve_scenario_path(args.scenario))
    cmap = scenario_heuristic(sc, "dp").cmap
    out = _output_dir(args)
    path = out / f"{sc.name}_cost_to_go.csv"
    rows = [{"s": s, "v": v, "J": j} for s, v, j in cmap.to_rows()]
    write_rows_csv(path, rows, ("s", "v", "J"))
    finite = cmap.values[np.isfinite(cmap.values)]
    print(
        f"{sc.name}: {len(cmap.s_axis)} x {len(cmap.v_axis)} map, "
        f"J(0, v) up to {fmt(finite.max() / 1000.0) if len(finite) else 'inf'} kJ, written to {path}"
    )
    return 0


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "bench": cmd_bench, "heatmap": cmd_heatmap}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PlannerError as e:
        logger.error(str(e))
        return 1
    except OSError as e:
        logger.error(f"i/o error: {e}")
        return 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(1)
