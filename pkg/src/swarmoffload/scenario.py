"""Scenario ingestion: versioned JSON config to validated problem inputs.

Ranged parameters (fleet layout, capacities, random state membership) are
expanded into concrete per-UAV values through the seeded generator at load
time and recorded in ``Scenario.expanded`` so every run is reproducible from
the config file and the seed alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from swarmoffload.channel import ChannelParams
from swarmoffload.efsm import EfsmsGraph, FsmSpec, StateCatalog, build_efsmsg, validate_fsm
from swarmoffload.geometry import SlotGrid, TrajectoryParams, position_at
from swarmoffload.solver import CloudParams, LocalParams, SolverConfig
from swarmoffload.stgraph import build_space_time_graph
from swarmoffload.taskgen import GENERATORS
from swarmoffload.taskmap import Problem, Roles, Subtask, TaskDag

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Config file could not be parsed or validated; names the offending field."""


@dataclass(frozen=True)
class RoutingOptions:
    max_periods: int = 2
    unit_bit_route: bool = False
    sample_rule: str = "start"


@dataclass(frozen=True)
class Scenario:
    seed: int
    grid: SlotGrid
    channel: ChannelParams
    fleet: tuple[TrajectoryParams, ...]
    compute_hz: tuple[float, ...]
    catalog: StateCatalog
    fsm: FsmSpec | None
    dag: TaskDag
    roles: Roles
    solver: SolverConfig
    pick_k: int
    cloud: CloudParams
    local: LocalParams
    routing: RoutingOptions
    expanded: dict
    raw: dict = field(repr=False)


def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ScenarioError(f"missing required key: {context}.{key}")
    return cfg[key]


def _range_pair(value, context: str) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return float(value), float(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        lo, hi = float(value[0]), float(value[1])
        if hi < lo:
            raise ScenarioError(f"{context}: range upper bound below lower bound")
        return lo, hi
    raise ScenarioError(f"{context}: expected a number or [low, high] pair")


def _draw(rng, pair: tuple[float, float]) -> float:
    lo, hi = pair
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _parse_grid(cfg: dict) -> SlotGrid:
    grid_cfg = _require(cfg, "slot_grid", "scenario")
    try:
        return SlotGrid(
            slot_length=float(_require(grid_cfg, "slot_length_s", "slot_grid")),
            slot_count=int(_require(grid_cfg, "slot_count", "slot_grid")),
        )
    except ValueError as exc:
        raise ScenarioError(f"slot_grid: {exc}") from exc


def _parse_channel(cfg: dict) -> ChannelParams:
    try:
        return ChannelParams.from_config(_require(cfg, "channel", "scenario"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def _explicit_uav(entry: dict, idx: int) -> tuple[TrajectoryParams, float]:
    ctx = f"fleet.uavs[{idx}]"
    center = _require(entry, "center", ctx)
    if not (isinstance(center, (list, tuple)) and len(center) == 3):
        raise ScenarioError(f"{ctx}.center: expected [x, y, z]")
    if "angular_velocity_rad_s" in entry:
        omega = float(entry["angular_velocity_rad_s"])
    elif "angular_velocity_deg_s" in entry:
        omega = math.radians(float(entry["angular_velocity_deg_s"]))
    else:
        raise ScenarioError(f"missing required key: {ctx}.angular_velocity_rad_s")
    if "initial_phase_rad" in entry:
        phase = float(entry["initial_phase_rad"])
    elif "initial_phase_deg" in entry:
        phase = math.radians(float(entry["initial_phase_deg"]))
    else:
        phase = 0.0
    try:
        traj = TrajectoryParams(
            center_x=float(center[0]),
            center_y=float(center[1]),
            center_z=float(center[2]),
            radius=float(_require(entry, "radius_m", ctx)),
            angular_velocity=omega,
            initial_phase=phase,
        )
    except ValueError as exc:
        raise ScenarioError(f"{ctx}: {exc}") from exc
    return traj, float(_require(entry, "compute_hz", ctx))


def _expand_fleet(cfg: dict, rng) -> tuple[tuple[TrajectoryParams, ...], tuple[float, ...]]:
    fleet_cfg = _require(cfg, "fleet", "scenario")
    mode = fleet_cfg.get("mode", "formations")
    if mode == "explicit":
        uavs = _require(fleet_cfg, "uavs", "fleet")
        if not uavs:
            raise ScenarioError("fleet.uavs: must list at least one UAV")
        parsed = [_explicit_uav(u, i) for i, u in enumerate(uavs)]
        return tuple(t for t, _ in parsed), tuple(c for _, c in parsed)
    if mode != "formations":
        raise ScenarioError(f"fleet.mode: unknown mode {mode!r}")
    formations = int(_require(fleet_cfg, "formations", "fleet"))
    per = int(_require(fleet_cfg, "uavs_per_formation", "fleet"))
    if formations < 1 or per < 1:
        raise ScenarioError("fleet: formations and uavs_per_formation must be >= 1")
    area = fleet_cfg.get("area_m", [4000.0, 4000.0])
    if isinstance(area, (int, float)):
        area = [area, area]
    alt = _range_pair(_require(fleet_cfg, "altitude_m", "fleet"), "fleet.altitude_m")
    radius = _range_pair(_require(fleet_cfg, "radius_m", "fleet"), "fleet.radius_m")
    omega = _range_pair(_require(fleet_cfg, "angular_velocity_rad_s", "fleet"), "fleet.angular_velocity_rad_s")
    compute = _range_pair(_require(fleet_cfg, "compute_hz", "fleet"), "fleet.compute_hz")
    trajs: list[TrajectoryParams] = []
    caps: list[float] = []
    half_w, half_h = float(area[0]) / 2.0, float(area[1]) / 2.0
    for _ in range(formations):
        cx = float(rng.uniform(-half_w, half_w))
        cy = float(rng.uniform(-half_h, half_h))
        cz = _draw(rng, alt)
        # one angular velocity per formation keeps it rigid in flight
        f_omega = _draw(rng, omega)
        phase0 = float(rng.uniform(0.0, 2.0 * math.pi))
        for j in range(per):
            trajs.append(TrajectoryParams(
                center_x=cx,
                center_y=cy,
                center_z=cz,
                radius=_draw(rng, radius),
                angular_velocity=f_omega,
                initial_phase=phase0 + 2.0 * math.pi * j / per,
            ))
            caps.append(_draw(rng, compute))
    return tuple(trajs), tuple(caps)


def _parse_fsm(cfg: dict) -> FsmSpec | None:
    if "fsm" not in cfg:
        return None
    f = cfg["fsm"]
    spec = FsmSpec(
        states=tuple(_require(f, "states", "fsm")),
        triggers=tuple(f.get("triggers", ())),
        transitions=tuple(tuple(t) for t in f.get("transitions", ())),
        initial=_require(f, "initial", "fsm"),
        terminals=tuple(_require(f, "terminals", "fsm")),
    )
    report = validate_fsm(spec)
    if not report.valid:
        raise ScenarioError(f"fsm: invalid state machine\n{report}")
    return spec


def _parse_dag(cfg: dict, state_types: tuple[str, ...]) -> TaskDag:
    task_cfg = _require(cfg, "task", "scenario")
    if "generator" in task_cfg:
        name = task_cfg["generator"]
        if name not in GENERATORS:
            raise ScenarioError(f"task.generator: unknown generator {name!r} (have {sorted(GENERATORS)})")
        kwargs = {k: v for k, v in task_cfg.items() if k != "generator"}
        kwargs.setdefault("state_types", state_types)
        try:
            return GENERATORS[name](**kwargs)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"task: {exc}") from exc
    if "dag" not in task_cfg:
        raise ScenarioError("missing required key: task.generator or task.dag")
    d = task_cfg["dag"]
    subtasks = []
    for i, s in enumerate(d.get("subtasks", [])):
        ctx = f"task.dag.subtasks[{i}]"
        stype = _require(s, "state_type", ctx)
        if stype not in state_types:
            raise ScenarioError(f"{ctx}.state_type: {stype!r} not in states.types")
        try:
            subtasks.append(Subtask(
                name=s.get("name", f"subtask{i + 1}"),
                required_state_type=stype,
                complexity=float(_require(s, "complexity", ctx)),
                scaling=float(_require(s, "scaling", ctx)),
            ))
        except ValueError as exc:
            raise ScenarioError(f"{ctx}: {exc}") from exc
    edges = tuple((int(a) - 1, int(b) - 1) for a, b in d.get("edges", []))
    try:
        return TaskDag(tuple(subtasks), edges, float(_require(d, "input_bits", "task.dag")))
    except ValueError as exc:
        raise ScenarioError(f"task.dag: {exc}") from exc


def _expand_membership(cfg: dict, dag: TaskDag, roles: Roles, p: int, compute_hz, rng) -> StateCatalog:
    states_cfg = _require(cfg, "states", "scenario")
    types = tuple(_require(states_cfg, "types", "states"))
    if not types:
        raise ScenarioError("states.types: must list at least one state type")
    if "unit_bit_cost_s" in states_cfg:
        costs = {}
        for uav, per_type in states_cfg["unit_bit_cost_s"].items():
            for stype, ct in per_type.items():
                costs[(int(uav), stype)] = float(ct)
        try:
            catalog = StateCatalog(p, types, costs)
        except ValueError as exc:
            raise ScenarioError(f"states.unit_bit_cost_s: {exc}") from exc
        _check_membership_feasible(catalog, dag, roles)
        return catalog

    complexity = states_cfg.get("complexity_cycles_per_bit", {})
    default_cx = float(states_cfg.get("default_complexity_cycles_per_bit", 100.0))
    mem_cfg = states_cfg.get("membership", {"mode": "all"})
    mode = mem_cfg.get("mode", "all")
    owned: list[set[str]] = []
    if mode == "all":
        owned = [set(types) for _ in range(p)]
    elif mode == "explicit":
        by_uav = _require(mem_cfg, "by_uav", "states.membership")
        owned = [set() for _ in range(p)]
        for uav, lst in by_uav.items():
            u = int(uav)
            if not 1 <= u <= p:
                raise ScenarioError(f"states.membership.by_uav: UAV {u} out of range 1..{p}")
            for stype in lst:
                if stype not in types:
                    raise ScenarioError(f"states.membership.by_uav.{uav}: unknown type {stype!r}")
                owned[u - 1].add(stype)
    elif mode == "random":
        lo = int(mem_cfg.get("min_types", 1))
        hi = int(mem_cfg.get("max_types", len(types)))
        if not 1 <= lo <= hi <= len(types):
            raise ScenarioError("states.membership: need 1 <= min_types <= max_types <= len(types)")
        for _ in range(p):
            count = int(rng.integers(lo, hi + 1))
            picks = rng.choice(len(types), size=count, replace=False)
            owned.append({types[int(x)] for x in picks})
        _fix_membership(owned, dag, roles, compute_hz, types)
    else:
        raise ScenarioError(f"states.membership.mode: unknown mode {mode!r}")

    costs = {}
    for u in range(1, p + 1):
        for stype in types:
            if stype in owned[u - 1]:
                cx = float(complexity.get(stype, default_cx))
                costs[(u, stype)] = cx / compute_hz[u - 1]
    try:
        catalog = StateCatalog(p, types, costs)
    except ValueError as exc:
        raise ScenarioError(f"states: {exc}") from exc
    _check_membership_feasible(catalog, dag, roles)
    return catalog


def _fix_membership(owned: list[set[str]], dag: TaskDag, roles: Roles, compute_hz, types) -> None:
    # deterministic repairs so randomly drawn memberships always admit the task
    owned[roles.initiator - 1].add(dag.subtasks[0].required_state_type)
    owned[roles.receiver - 1].add(dag.subtasks[-1].required_state_type)
    for s in dag.subtasks:
        if not any(s.required_state_type in o for o in owned):
            u = min(range(len(owned)), key=lambda i: (len(owned[i]), -compute_hz[i], i))
            owned[u].add(s.required_state_type)


def _check_membership_feasible(catalog: StateCatalog, dag: TaskDag, roles: Roles) -> None:
    if not catalog.has_state(roles.initiator, dag.subtasks[0].required_state_type):
        raise ScenarioError(
            f"roles.initiator: UAV {roles.initiator} lacks the source's state "
            f"{dag.subtasks[0].required_state_type!r}"
        )
    if not catalog.has_state(roles.receiver, dag.subtasks[-1].required_state_type):
        raise ScenarioError(
            f"roles.receiver: UAV {roles.receiver} lacks the sink's state "
            f"{dag.subtasks[-1].required_state_type!r}"
        )
    for i, s in enumerate(dag.subtasks):
        if not catalog.members_of(s.required_state_type):
            raise ScenarioError(f"task: no UAV owns state {s.required_state_type!r} needed by subtask {i}")


def scenario_from_dict(cfg: dict, seed: int | None = None) -> Scenario:
    """Validate and seed-expand a parsed config mapping."""
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    if seed is None:
        seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    grid = _parse_grid(cfg)
    channel = _parse_channel(cfg)
    fleet, compute_hz = _expand_fleet(cfg, rng)
    p = len(fleet)

    roles_cfg = cfg.get("roles", {})
    roles = Roles(int(roles_cfg.get("initiator", 1)), int(roles_cfg.get("receiver", p)))
    if not (1 <= roles.initiator <= p and 1 <= roles.receiver <= p):
        raise ScenarioError(f"roles: UAV indices must lie in 1..{p}")

    states_cfg = _require(cfg, "states", "scenario")
    types = tuple(_require(states_cfg, "types", "states"))
    fsm = _parse_fsm(cfg)
    if fsm is not None and not set(types) <= set(fsm.states):
        missing = sorted(set(types) - set(fsm.states))
        raise ScenarioError(f"fsm.states: missing catalog types {missing}")

    dag = _parse_dag(cfg, types)
    catalog = _expand_membership(cfg, dag, roles, p, compute_hz, rng)

    solver = SolverConfig.from_config(cfg.get("solver", {}), seed=seed)
    baselines = cfg.get("baselines", {})
    pick_k = int(baselines.get("pick_k", 2))
    cloud = CloudParams.from_config(baselines.get("cloud", {}))
    local = LocalParams.from_config(baselines.get("local", {}))

    routing_cfg = cfg.get("routing", {})
    routing = RoutingOptions(
        max_periods=int(routing_cfg.get("max_periods", 2)),
        unit_bit_route=bool(routing_cfg.get("unit_bit_route", False)),
        sample_rule=str(routing_cfg.get("sample_rule", "start")),
    )
    if routing.sample_rule not in ("start", "midpoint"):
        raise ScenarioError(f"routing.sample_rule: unknown rule {routing.sample_rule!r}")
    if routing.max_periods < 1:
        raise ScenarioError("routing.max_periods: must be >= 1")

    expanded = {
        "seed": seed,
        "uav_count": p,
        "roles": {"initiator": roles.initiator, "receiver": roles.receiver},
        "uavs": [
            {
                "index": u + 1,
                "center": [fleet[u].center_x, fleet[u].center_y, fleet[u].center_z],
                "radius_m": fleet[u].radius,
                "angular_velocity_rad_s": fleet[u].angular_velocity,
                "initial_phase_rad": fleet[u].initial_phase,
                "compute_hz": compute_hz[u],
                "states": list(catalog.states_of(u + 1)),
            }
            for u in range(p)
        ],
        "task": {
            "subtasks": [
                {"name": s.name, "state_type": s.required_state_type,
                 "complexity": s.complexity, "scaling": s.scaling}
                for s in dag.subtasks
            ],
            "edges": [[a + 1, b + 1] for a, b in dag.edges],
            "input_bits": dag.source_volume,
        },
    }
    return Scenario(
        seed=seed, grid=grid, channel=channel, fleet=fleet, compute_hz=compute_hz,
        catalog=catalog, fsm=fsm, dag=dag, roles=roles, solver=solver,
        pick_k=pick_k, cloud=cloud, local=local, routing=routing,
        expanded=expanded, raw=cfg,
    )


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    """Load, validate, and seed-expand a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(cfg, seed=seed)


def with_task_override(scenario: Scenario, variable: str, value: float) -> Scenario:
    """Same scenario with the swept task variable replaced."""
    cfg = json.loads(json.dumps(scenario.raw))
    task_cfg = cfg["task"]
    if variable == "input_size_bits":
        if "generator" in task_cfg:
            task_cfg["input_bits"] = value
        else:
            task_cfg["dag"]["input_bits"] = value
    elif variable == "complexity_cycles_per_bit":
        if "generator" in task_cfg:
            task_cfg["complexity"] = value
        else:
            for s in task_cfg["dag"]["subtasks"]:
                s["complexity"] = value
    else:
        raise ScenarioError(
            f"sweep.variable: unknown variable {variable!r} "
            "(expected 'input_size_bits' or 'complexity_cycles_per_bit')"
        )
    return scenario_from_dict(cfg, seed=scenario.seed)


def build_problem(scenario: Scenario) -> Problem:
    """Sample the fleet, assemble the state-extended space-time graph, and
    bundle everything a mapping is evaluated against."""
    base = build_space_time_graph(
        list(scenario.fleet), scenario.grid, scenario.channel,
        sample_rule=scenario.routing.sample_rule,
        max_periods=scenario.routing.max_periods,
    )
    fsm_specs = None
    if scenario.fsm is not None:
        fsm_specs = {u: scenario.fsm for u in range(1, len(scenario.fleet) + 1)}
    graph = build_efsmsg(base, scenario.catalog, fsm_specs)
    return Problem(
        graph=graph,
        dag=scenario.dag,
        catalog=scenario.catalog,
        compute_hz=scenario.compute_hz,
        roles=scenario.roles,
        unit_bit_route=scenario.routing.unit_bit_route,
    )


def fleet_positions_bounded(scenario: Scenario) -> bool:
    """Sanity check: every sampled position stays inside the declared area
    expanded by the orbit radius."""
    for traj in scenario.fleet:
        for k in range(scenario.grid.slot_count):
            pos = position_at(traj, k * scenario.grid.slot_length)
            r = math.hypot(pos.x - traj.center_x, pos.y - traj.center_y)
            if r > traj.radius + 1e-9:
                return False
    return True
