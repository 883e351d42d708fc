"""Experiment harness: strategy dispatch, sweeps, and the enumeration oracle.

Sweep output is one CSV with the fixed columns
``swept_value,strategy,seed,latency_s,feasible,wall_ms``; every value except
the wall time is reproducible from (config, seed) alone, so verification
re-runs compare rows with the wall column masked.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from swarmoffload.scenario import Scenario, ScenarioError, build_problem, scenario_from_dict, with_task_override
from swarmoffload.solver import (
    InfeasibleScenarioError,
    SolverConfig,
    optimize_mapping,
    solve_cloud,
    solve_greedy_lb,
    solve_local,
    solve_pick_kx,
    solve_wrr,
)
from swarmoffload.taskmap import MappingDecision, Problem, Run, evaluate, feasible_nodes

STRATEGIES = ("pso", "wrr", "greedy_lb", "pick_kx", "cloud", "local")
SWEEP_COLUMNS = ("swept_value", "strategy", "seed", "latency_s", "feasible", "wall_ms")


@dataclass(frozen=True)
class StrategyOutcome:
    strategy: str
    latency: float
    feasible: bool
    mapping: MappingDecision | None = None
    trace: tuple[float, ...] | None = None


def run_strategy(
    scenario: Scenario,
    problem: Problem,
    strategy: str,
    seed: int | None = None,
    fitness_cache: dict | None = None,
    position_hook=None,
) -> StrategyOutcome:
    """Run one strategy against a built problem."""
    if strategy == "pso":
        cfg = scenario.solver if seed is None else dataclasses.replace(scenario.solver, seed=seed)
        try:
            res = optimize_mapping(problem, cfg, fitness_cache=fitness_cache, position_hook=position_hook)
        except InfeasibleScenarioError:
            return StrategyOutcome("pso", math.inf, False)
        return StrategyOutcome("pso", res.best_latency, res.feasible, res.best_mapping, res.trace)
    if strategy == "wrr":
        r = solve_wrr(problem)
    elif strategy == "greedy_lb":
        r = solve_greedy_lb(problem)
    elif strategy == "pick_kx":
        r = solve_pick_kx(problem, k=scenario.pick_k, seed=scenario.seed if seed is None else seed)
    elif strategy == "cloud":
        r = solve_cloud(problem.dag, scenario.channel, scenario.cloud)
    elif strategy == "local":
        r = solve_local(problem.dag, scenario.local)
    else:
        raise ValueError(f"unknown strategy {strategy!r} (expected one of {STRATEGIES})")
    return StrategyOutcome(r.strategy, r.latency, r.feasible, r.mapping)


@dataclass(frozen=True)
class SweepSpec:
    variable: str                  # input_size_bits | complexity_cycles_per_bit
    values: tuple[float, ...]
    strategies: tuple[str, ...]
    seeds: tuple[int, ...]
    emit_traces: bool = False

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r} in sweep (expected subset of {STRATEGIES})")

    @classmethod
    def from_config(cls, cfg: dict, master_seed: int = 0) -> "SweepSpec":
        try:
            variable = cfg["variable"]
            values = tuple(float(v) for v in cfg["values"])
        except KeyError as exc:
            raise ScenarioError(f"missing required key: sweep.{exc.args[0]}") from exc
        if "seeds" in cfg:
            seeds = tuple(int(s) for s in cfg["seeds"])
        else:
            seeds = tuple(master_seed + r for r in range(int(cfg.get("repetitions", 1))))
        strategies = tuple(cfg.get("strategies", ["pso", "cloud", "local"]))
        return cls(variable, values, strategies, seeds, bool(cfg.get("emit_traces", False)))


@dataclass(frozen=True)
class SweepRow:
    swept_value: float
    strategy: str
    seed: int
    latency_s: float
    feasible: bool
    wall_ms: float

    def csv_cells(self) -> tuple[str, ...]:
        return (
            repr(self.swept_value),
            self.strategy,
            str(self.seed),
            repr(self.latency_s),
            str(self.feasible).lower(),
            f"{self.wall_ms:.3f}",
        )


def sweep_rows(raw_cfg: dict, sweep: SweepSpec) -> tuple[list[SweepRow], dict]:
    """Compute all sweep rows; traces keyed by (value, seed) for pso points."""
    rows: list[SweepRow] = []
    traces: dict[tuple[float, int], tuple[float, ...]] = {}
    if not sweep.strategies:
        return rows, traces
    for value in sweep.values:
        for seed in sweep.seeds:
            base = scenario_from_dict(raw_cfg, seed=seed)
            scn = with_task_override(base, sweep.variable, value)
            problem = build_problem(scn)
            cache: dict = {}
            for strategy in sweep.strategies:
                t0 = time.perf_counter()
                out = run_strategy(scn, problem, strategy, fitness_cache=cache)
                wall_ms = (time.perf_counter() - t0) * 1000.0
                rows.append(SweepRow(value, strategy, seed, out.latency, out.feasible, wall_ms))
                if strategy == "pso" and out.trace is not None and sweep.emit_traces:
                    traces[(value, seed)] = out.trace
    return rows, traces


def write_sweep_csv(rows: list[SweepRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SWEEP_COLUMNS)]
    lines += [",".join(r.csv_cells()) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def write_trace_csv(trace: tuple[float, ...], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["generation,best_fitness"]
    lines += [f"{g},{repr(v)}" for g, v in enumerate(trace)]
    path.write_text("\n".join(lines) + "\n")


def rows_equal_modulo_wall(a: list[SweepRow], b: list[SweepRow]) -> bool:
    """Byte-level determinism check on everything except wall time."""
    keys_a = [r.csv_cells()[:5] for r in a]
    keys_b = [r.csv_cells()[:5] for r in b]
    return keys_a == keys_b


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    csv_path: Path
    figure_path: Path | None
    trace_paths: list[Path]
    verified: bool | None = None


def run_sweep(
    raw_cfg: dict,
    sweep: SweepSpec,
    out_dir: str | Path,
    figures: bool = True,
    verify: bool = False,
) -> SweepResult:
    """Execute the sweep, write the CSV (and figures) under ``out_dir``."""
    out_dir = Path(out_dir)
    rows, traces = sweep_rows(raw_cfg, sweep)
    csv_path = out_dir / "sweep_results.csv"
    write_sweep_csv(rows, csv_path)
    trace_paths = []
    for (value, seed), trace in sorted(traces.items()):
        tp = out_dir / "traces" / f"trace_v{value:g}_s{seed}.csv"
        write_trace_csv(trace, tp)
        trace_paths.append(tp)
    figure_path = None
    if figures and rows:
        from swarmoffload import plots

        figure_path = out_dir / "sweep_latency.png"
        plots.render_sweep_figure(rows, figure_path, variable=sweep.variable)
    verified = None
    if verify:
        rows2, _ = sweep_rows(raw_cfg, sweep)
        verified = rows_equal_modulo_wall(rows, rows2)
    return SweepResult(rows, csv_path, figure_path, trace_paths, verified)


def emit_plotdata(csv_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Thin exporter: one x/y series file per strategy from a sweep CSV,
    averaging the latency over seeds at each swept value."""
    csv_path = Path(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = csv_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    idx = {name: header.index(name) for name in ("swept_value", "strategy", "latency_s", "feasible")}
    series: dict[str, dict[float, list[float]]] = {}
    for line in lines[1:]:
        cells = line.split(",")
        if cells[idx["feasible"]] != "true":
            continue
        strategy = cells[idx["strategy"]]
        x = float(cells[idx["swept_value"]])
        y = float(cells[idx["latency_s"]])
        series.setdefault(strategy, {}).setdefault(x, []).append(y)
    paths = []
    for strategy in sorted(series):
        path = out_dir / f"{strategy}.xy"
        rows = [
            f"{repr(x)} {repr(sum(ys) / len(ys))}"
            for x, ys in sorted(series[strategy].items())
        ]
        path.write_text("\n".join(rows) + "\n")
        paths.append(path)
    return paths


# --- enumeration oracle -------------------------------------------------------

def count_mappings(problem: Problem) -> int:
    total = 1
    for i in range(problem.dag.size):
        total *= len(feasible_nodes(i, problem.dag, problem.catalog, problem.grid, problem.roles))
        if total == 0:
            return 0
    return total


def enumerate_mappings(problem: Problem):
    """All structurally feasible mappings, in lexicographic run order."""
    tables = [
        feasible_nodes(i, problem.dag, problem.catalog, problem.grid, problem.roles)
        for i in range(problem.dag.size)
    ]
    p, n = problem.uav_count, problem.grid.slot_count
    for combo in itertools.product(*tables):
        yield MappingDecision.from_runs(list(combo), p, n)


def enumeration_optimum(problem: Problem, limit: int = 1_000_000):
    """Exhaustive optimum over all feasible mappings.

    Returns (best_latency, best_mapping, candidates, evaluable); the optimum
    is inf when no candidate has consistent timing.
    """
    total = count_mappings(problem)
    if total > limit:
        raise ValueError(f"enumeration of {total} candidates exceeds the {limit} limit")
    best = math.inf
    best_mapping = None
    evaluable = 0
    for mapping in enumerate_mappings(problem):
        res = evaluate(mapping, problem)
        if res.ok:
            evaluable += 1
            if res.total_latency < best:
                best = res.total_latency
                best_mapping = mapping
    return best, best_mapping, total, evaluable


def random_small_instance(seed: int, p_max: int = 3, n_max: int = 3, q_max: int = 3):
    """A small random scenario guaranteed to admit at least one consistent
    mapping (deterministically re-drawn otherwise). Returns (scenario, problem)."""
    for attempt in range(64):
        rng = np.random.default_rng(np.random.SeedSequence((seed, attempt)))
        p = int(rng.integers(2, p_max + 1))
        n = int(rng.integers(2, n_max + 1))
        q = int(rng.integers(2, q_max + 1))
        types = ["sense", "fuse"]
        owned = []
        for _ in range(p):
            count = int(rng.integers(1, len(types) + 1))
            picks = rng.choice(len(types), size=count, replace=False)
            owned.append({types[int(x)] for x in sorted(picks)})
        subtasks = []
        for i in range(q):
            subtasks.append({
                "name": f"step{i + 1}",
                "state_type": types[i % len(types)],
                "complexity": float(rng.uniform(100.0, 200.0)),
                "scaling": 0.8,
            })
        edges = [[i + 1, i + 2] for i in range(q - 1)]
        if q == 3 and rng.random() < 0.5:
            edges = [[1, 2], [1, 3], [2, 3]]  # source feeds both downstream steps
        owned[0].add(subtasks[0]["state_type"])
        owned[p - 1].add(subtasks[-1]["state_type"])
        for s in subtasks:
            if not any(s["state_type"] in o for o in owned):
                owned[int(rng.integers(0, p))].add(s["state_type"])
        uavs = []
        for _ in range(p):
            uavs.append({
                "center": [float(rng.uniform(-1700, 1700)), float(rng.uniform(-1700, 1700)), float(rng.uniform(20, 100))],
                "radius_m": float(rng.uniform(40, 160)),
                "angular_velocity_rad_s": float(rng.uniform(0.05, 0.8)),
                "initial_phase_rad": float(rng.uniform(0, 2 * math.pi)),
                "compute_hz": float(rng.uniform(5e8, 1.2e9)),
            })
        cfg = {
            "schema_version": 1,
            "slot_grid": {"slot_length_s": 1.0, "slot_count": n},
            "channel": {
                "carrier_frequency_hz": 2.4e9, "los_attenuation_db": 3.0,
                "eirp_dbm": 20.0, "rx_gain_db": 3.0, "noise_power_dbm": -100.0,
                "bandwidth_hz": 2.0e7, "ber_threshold": 1.0e-5,
            },
            "fleet": {"mode": "explicit", "uavs": uavs},
            "states": {
                "types": types,
                "membership": {"mode": "explicit", "by_uav": {str(u + 1): sorted(owned[u]) for u in range(p)}},
                "complexity_cycles_per_bit": {t: 100.0 for t in types},
            },
            "task": {"dag": {
                "subtasks": subtasks,
                "edges": edges,
                "input_bits": float(rng.uniform(2e5, 1.5e6)),
            }},
            "roles": {"initiator": 1, "receiver": p},
        }
        try:
            scenario = scenario_from_dict(cfg, seed=seed)
        except ScenarioError:
            continue
        problem = build_problem(scenario)
        best, _, total, evaluable = enumeration_optimum(problem)
        if math.isfinite(best) and total >= 2:
            return scenario, problem
    raise RuntimeError(f"could not draw a feasible small instance for seed {seed}")


@dataclass
class OracleRecord:
    instance: int
    seed: int
    optimum: float
    candidates: int
    evaluable: int
    latencies: dict  # strategy -> latency


@dataclass
class OracleReport:
    records: list[OracleRecord]

    def gap_pct(self, rec: OracleRecord, strategy: str) -> float:
        lat = rec.latencies[strategy]
        if not math.isfinite(lat) or rec.optimum == 0:
            return math.inf
        return 100.0 * (lat - rec.optimum) / rec.optimum

    def summary_lines(self) -> list[str]:
        lines = []
        for rec in self.records:
            gap = self.gap_pct(rec, "pso")
            lines.append(
                f"instance {rec.instance:2d} seed {rec.seed:3d}: optimum {rec.optimum:.6f}s over "
                f"{rec.evaluable}/{rec.candidates} consistent candidates; pso gap {gap:.2f}%"
            )
        n_ok = sum(1 for rec in self.records if self.gap_pct(rec, "pso") <= 5.0)
        lines.append(f"pso within 5% of the enumeration optimum on {n_ok}/{len(self.records)} instances")
        dominated = sum(
            1 for rec in self.records
            if rec.latencies["pso"] <= min(rec.latencies[s] for s in ("wrr", "greedy_lb", "pick_kx")) + 1e-12
        )
        lines.append(f"pso at or below every load-balancing baseline on {dominated}/{len(self.records)} instances")
        return lines


def run_oracle_suite(
    instances: int = 20,
    p_max: int = 3,
    n_max: int = 3,
    q_max: int = 3,
    master_seed: int = 0,
    solver_cfg: SolverConfig | None = None,
    pick_k: int = 2,
) -> OracleReport:
    """Compare the swarm search and baselines against exhaustive enumeration
    on a battery of small random instances."""
    records = []
    for idx in range(instances):
        seed = master_seed + idx
        scenario, problem = random_small_instance(seed, p_max=p_max, n_max=n_max, q_max=q_max)
        best, _, total, evaluable = enumeration_optimum(problem)
        cfg = solver_cfg or SolverConfig(swarm_size=200, max_iterations=500, seed=seed)
        cfg = dataclasses.replace(cfg, seed=seed)
        cache: dict = {}
        latencies = {}
        pso = optimize_mapping(problem, cfg, fitness_cache=cache)
        latencies["pso"] = pso.best_latency
        latencies["wrr"] = solve_wrr(problem).latency
        latencies["greedy_lb"] = solve_greedy_lb(problem).latency
        latencies["pick_kx"] = solve_pick_kx(problem, k=pick_k, seed=seed).latency
        records.append(OracleRecord(idx, seed, best, total, evaluable, latencies))
    return OracleReport(records)


def write_oracle_csv(report: OracleReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    strategies = ("pso", "wrr", "greedy_lb", "pick_kx")
    lines = ["instance,seed,optimum_s,candidates,evaluable," + ",".join(f"{s}_latency_s" for s in strategies)]
    for rec in report.records:
        cells = [str(rec.instance), str(rec.seed), repr(rec.optimum), str(rec.candidates), str(rec.evaluable)]
        cells += [repr(rec.latencies[s]) for s in strategies]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
