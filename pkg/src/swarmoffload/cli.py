"""Command-line front end.

Subcommands: validate, graph, solve, sweep, oracle, emit-plotdata. The solve
and sweep report paths write delimited results plus rendered figures under
the output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from swarmoffload import harness
from swarmoffload.scenario import ScenarioError, build_problem, load_scenario
from swarmoffload.solver import SolverConfig
from swarmoffload.stgraph import build_space_time_graph


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config's)")
    p.add_argument("--out-dir", default="out", help="output directory (default: ./out)")
    p.add_argument("--unit-bit-route", action="store_true",
                   help="route on raw per-bit weights and scale the sum by the volume")


def _load(args):
    scn = load_scenario(args.config, seed=args.seed)
    if args.unit_bit_route:
        raw = json.loads(json.dumps(scn.raw))
        raw.setdefault("routing", {})["unit_bit_route"] = True
        from swarmoffload.scenario import scenario_from_dict

        scn = scenario_from_dict(raw, seed=scn.seed)
    return scn


def _write_expanded(scn, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "expanded_scenario.json").write_text(json.dumps(scn.expanded, indent=2) + "\n")


def cmd_validate(args) -> int:
    try:
        scn = _load(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}")
        return 2
    p = len(scn.fleet)
    print(f"scenario ok: {p} UAVs, {scn.grid.slot_count} slots of {scn.grid.slot_length}s, "
          f"{scn.dag.size} subtasks, {len(scn.catalog.state_types)} state types")
    if scn.fsm is not None:
        from swarmoffload.efsm import validate_fsm

        print(str(validate_fsm(scn.fsm)))
    return 0


def cmd_graph(args) -> int:
    scn = _load(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.efsm:
        problem = build_problem(scn)
        graph = problem.graph
        name = "efsmsg_edges.txt"
    else:
        graph = build_space_time_graph(list(scn.fleet), scn.grid, scn.channel,
                                       sample_rule=scn.routing.sample_rule,
                                       max_periods=scn.routing.max_periods)
        name = "stgraph_edges.txt"
    path = out_dir / name
    path.write_text(graph.dump_edges())
    print(f"{graph.node_count} nodes, {len(graph.edges)} edges -> {path}")
    return 0


def cmd_solve(args) -> int:
    scn = _load(args)
    out_dir = Path(args.out_dir)
    _write_expanded(scn, out_dir)
    problem = build_problem(scn)
    t0 = time.perf_counter()
    out = harness.run_strategy(scn, problem, args.strategy)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    row = harness.SweepRow(scn.dag.source_volume, args.strategy, scn.seed, out.latency, out.feasible, wall_ms)
    harness.write_sweep_csv([row], out_dir / "solve_result.csv")
    if out.trace is not None:
        harness.write_trace_csv(out.trace, out_dir / "convergence_trace.csv")
        if not args.no_figures:
            from swarmoffload import plots

            plots.render_convergence_figure(out.trace, out_dir / "convergence.png")
    if out.feasible:
        print(f"{args.strategy}: latency {out.latency:.6f} s ({wall_ms:.0f} ms)")
        return 0
    print(f"{args.strategy}: infeasible on this scenario")
    return 1


def cmd_sweep(args) -> int:
    scn = _load(args)
    raw = scn.raw
    if args.variable is not None:
        values = tuple(float(v) for v in args.values.split(","))
        seeds = tuple(scn.seed + r for r in range(args.repetitions))
        strategies = tuple(args.strategies.split(","))
        spec = harness.SweepSpec(args.variable, values, strategies, seeds, args.emit_traces)
    elif "sweep" in raw:
        spec = harness.SweepSpec.from_config(raw["sweep"], master_seed=scn.seed)
    else:
        print("no sweep specification: pass --variable/--values or add a 'sweep' block to the config")
        return 2
    if args.unit_bit_route:
        raw = json.loads(json.dumps(raw))
        raw.setdefault("routing", {})["unit_bit_route"] = True
    result = harness.run_sweep(raw, spec, args.out_dir, figures=not args.no_figures, verify=args.verify)
    print(f"{len(result.rows)} rows -> {result.csv_path}")
    if result.figure_path is not None:
        print(f"figure -> {result.figure_path}")
    if args.verify:
        print("verify: byte-identical re-run" if result.verified else "verify: MISMATCH between runs")
        return 0 if result.verified else 1
    return 0


def cmd_oracle(args) -> int:
    cfg = SolverConfig(swarm_size=args.swarm_size, max_iterations=args.iterations, seed=args.seed or 0)
    report = harness.run_oracle_suite(
        instances=args.instances, p_max=args.p_max, n_max=args.n_max, q_max=args.q_max,
        master_seed=args.seed or 0, solver_cfg=cfg,
    )
    out_dir = Path(args.out_dir)
    harness.write_oracle_csv(report, out_dir / "oracle_results.csv")
    for line in report.summary_lines():
        print(line)
    print(f"results -> {out_dir / 'oracle_results.csv'}")
    return 0


def cmd_emit_plotdata(args) -> int:
    paths = harness.emit_plotdata(args.results, args.out_dir)
    for p in paths:
        print(p)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="swarmoffload",
                                     description="Latency-minimal task offloading onto a dynamic UAV swarm")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="load and validate a scenario")
    _add_common(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_graph = sub.add_parser("graph", help="dump the space-time graph edge list")
    _add_common(p_graph)
    p_graph.add_argument("--efsm", action="store_true", help="dump the state-extended graph")
    p_graph.set_defaults(func=cmd_graph)

    p_solve = sub.add_parser("solve", help="solve a single scenario with one strategy")
    _add_common(p_solve)
    p_solve.add_argument("--strategy", default="pso", choices=harness.STRATEGIES)
    p_solve.add_argument("--no-figures", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--variable", choices=("input_size_bits", "complexity_cycles_per_bit"))
    p_sweep.add_argument("--values", help="comma-separated swept values")
    p_sweep.add_argument("--strategies", default="pso,cloud,local", help="comma-separated strategy list")
    p_sweep.add_argument("--repetitions", type=int, default=1)
    p_sweep.add_argument("--emit-traces", action="store_true")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.add_argument("--verify", action="store_true",
                         help="re-run and check the results are byte-identical (wall time excluded)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="compare strategies against exhaustive enumeration")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--out-dir", default="out")
    p_oracle.add_argument("--instances", type=int, default=5)
    p_oracle.add_argument("--p-max", type=int, default=3)
    p_oracle.add_argument("--n-max", type=int, default=3)
    p_oracle.add_argument("--q-max", type=int, default=3)
    p_oracle.add_argument("--swarm-size", type=int, default=100)
    p_oracle.add_argument("--iterations", type=int, default=200)
    p_oracle.set_defaults(func=cmd_oracle)

    p_emit = sub.add_parser("emit-plotdata", help="export x/y series files from a sweep CSV")
    p_emit.add_argument("--results", required=True, help="sweep_results.csv path")
    p_emit.add_argument("--out-dir", default="out/plotdata")
    p_emit.set_defaults(func=cmd_emit_plotdata)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
