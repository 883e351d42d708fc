"""DAG task model, mapping constraints, and the latency evaluator.

A mapping assigns every subtask a run: one UAV over consecutive slots. The
evaluator sweeps subtasks in topological order, routes each predecessor's
output volume to the run's start node over the state-extended space-time
graph, and accounts busy time per (UAV, slot) so cache edges reflect the
schedule built so far. Timing is absolute: slot k covers
[(k-1)*dt, k*dt) with the task starting at t=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from swarmoffload.efsm import EfsmsGraph, StateCatalog
from swarmoffload.geometry import SlotGrid
from swarmoffload.stgraph import RouteResult, SpaceTimeGraph, StNodeId, shortest_route


@dataclass(frozen=True)
class Subtask:
    name: str
    required_state_type: str
    complexity: float  # cycles/bit
    scaling: float     # output/input data ratio, in (0, 1]

    def __post_init__(self):
        if not self.complexity > 0:
            raise ValueError(f"subtask {self.name!r}: complexity must be > 0")
        if not 0.0 < self.scaling <= 1.0:
            raise ValueError(f"subtask {self.name!r}: scaling must lie in (0, 1]")


@dataclass(frozen=True)
class TaskDag:
    """Task as a DAG: subtask 0 is the unique source, the last the unique sink."""

    subtasks: tuple[Subtask, ...]
    edges: tuple[tuple[int, int], ...]
    source_volume: float  # bits entering subtask 0

    def __post_init__(self):
        q = len(self.subtasks)
        if q < 1:
            raise ValueError("task needs at least one subtask")
        if not self.source_volume > 0:
            raise ValueError(f"source_volume must be > 0, got {self.source_volume}")
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < q and 0 <= b < q):
                raise ValueError(f"edge ({a}, {b}) references unknown subtask")
            if a == b:
                raise ValueError(f"self-edge on subtask {a}")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))
        preds = [[] for _ in range(q)]
        succs = [[] for _ in range(q)]
        for a, b in self.edges:
            preds[b].append(a)
            succs[a].append(b)
        sources = [i for i in range(q) if not preds[i]]
        sinks = [i for i in range(q) if not succs[i]]
        if sources != [0]:
            raise ValueError(f"subtask 0 must be the unique source, found sources {sources}")
        if sinks != [q - 1]:
            raise ValueError(f"subtask {q - 1} must be the unique sink, found sinks {sinks}")
        object.__setattr__(self, "_preds", tuple(tuple(sorted(x)) for x in preds))
        object.__setattr__(self, "_succs", tuple(tuple(sorted(x)) for x in succs))
        object.__setattr__(self, "_topo", _kahn_order(self))
        if len(self._topo) != q:
            raise ValueError("task graph contains a cycle")

    @property
    def size(self) -> int:
        return len(self.subtasks)

    def predecessors(self, i: int) -> tuple[int, ...]:
        return self._preds[i]

    def successors(self, i: int) -> tuple[int, ...]:
        return self._succs[i]


def _kahn_order(dag: TaskDag) -> tuple[int, ...]:
    q = len(dag.subtasks)
    indeg = [0] * q
    for _, b in dag.edges:
        indeg[b] += 1
    import heapq

    ready = [i for i in range(q) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in dag._succs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    return tuple(order)


def topological_order(dag: TaskDag) -> tuple[int, ...]:
    """Deterministic topological order: among ready subtasks, lowest index first."""
    return dag._topo


def task_volume(dag: TaskDag) -> np.ndarray:
    """Per-subtask data volumes: each subtask receives the sum of its
    predecessors' scaled outputs; the source uses the task input volume."""
    volumes = np.zeros(dag.size)
    for i in topological_order(dag):
        if i == 0:
            volumes[0] = dag.source_volume
        else:
            volumes[i] = sum(volumes[j] * dag.subtasks[j].scaling for j in dag.predecessors(i))
    return volumes


class Run(NamedTuple):
    """Placement of one subtask: ``span`` extra slots beyond the start slot."""

    uav: int         # 1-based
    start_slot: int  # 1-based
    span: int


@dataclass(frozen=True)
class Roles:
    initiator: int  # UAV that holds the task input at slot 1
    receiver: int   # UAV that must hold the final result


@dataclass(frozen=True)
class MappingDecision:
    """Binary assignment of subtasks to (UAV, slot) cells plus declared spans.

    Column layout is slot-major: column (k-1)*p + (d-1) is UAV d in slot k.
    """

    matrix: np.ndarray       # (q, n*p) uint8
    spans: tuple[int, ...]

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.uint8))
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
        if len(self.spans) != m.shape[0]:
            raise ValueError("one declared span per subtask row required")

    @classmethod
    def from_runs(cls, runs: list[Run] | tuple[Run, ...], uav_count: int, slot_count: int) -> "MappingDecision":
        q = len(runs)
        m = np.zeros((q, slot_count * uav_count), dtype=np.uint8)
        for i, run in enumerate(runs):
            if not (1 <= run.uav <= uav_count and 1 <= run.start_slot and run.start_slot + run.span <= slot_count and run.span >= 0):
                raise ValueError(f"run {run} out of range for p={uav_count}, n={slot_count}")
            for off in range(run.span + 1):
                m[i, (run.start_slot - 1 + off) * uav_count + (run.uav - 1)] = 1
        return cls(m, tuple(r.span for r in runs))

    def run_of(self, i: int, uav_count: int) -> Run | None:
        """Parse row i as a single consecutive-slot run; None if malformed."""
        cols = np.flatnonzero(self.matrix[i])
        if cols.size == 0:
            return None
        uavs = cols % uav_count + 1
        slots = cols // uav_count + 1
        if np.unique(uavs).size != 1:
            return None
        slots = np.sort(slots)
        if not np.array_equal(slots, np.arange(slots[0], slots[0] + slots.size)):
            return None
        return Run(int(uavs[0]), int(slots[0]), int(slots.size - 1))

    def runs(self, uav_count: int) -> tuple[Run | None, ...]:
        return tuple(self.run_of(i, uav_count) for i in range(self.matrix.shape[0]))

    def key(self) -> bytes:
        return self.matrix.tobytes() + bytes(self.spans)


def feasible_nodes(
    subtask_index: int,
    dag: TaskDag,
    catalog: StateCatalog,
    grid: SlotGrid,
    roles: Roles,
) -> tuple[Run, ...]:
    """All admissible runs for one subtask.

    The run's UAV must own the subtask's required state type; slots are
    consecutive inside the period. The source is pinned to the initiating
    UAV starting at slot 1, the sink to the receiving UAV. An empty result
    means the scenario cannot host this subtask.
    """
    q = dag.size
    n = grid.slot_count
    stype = dag.subtasks[subtask_index].required_state_type
    members = set(catalog.members_of(stype))
    uavs = sorted(members)
    if subtask_index == 0:
        uavs = [roles.initiator] if roles.initiator in members else []
    if subtask_index == q - 1:
        uavs = [u for u in uavs if u == roles.receiver]
    runs = []
    for d in uavs:
        start_slots = (1,) if subtask_index == 0 else range(1, n + 1)
        for k in start_slots:
            for span in range(0, n - k + 1):
                runs.append(Run(d, k, span))
    return tuple(runs)


def check_constraints(
    X: MappingDecision,
    dag: TaskDag,
    catalog: StateCatalog,
    grid: SlotGrid,
    roles: Roles,
) -> tuple[str, ...]:
    """Structural audit of a mapping; empty result means feasible.

    Checks binarity, row sums against declared spans, the one-UAV
    consecutive-slot run shape, endpoint pinning, the slot horizon, and
    state membership of every run's UAV.
    """
    p, n, q = catalog.uav_count, grid.slot_count, dag.size
    out: list[str] = []
    m = X.matrix
    if m.shape != (q, n * p):
        return (f"matrix shape {m.shape} does not match (q={q}, n*p={n * p})",)
    if np.any(m > 1):
        out.append("matrix entries must be binary")
    for i in range(q):
        row_sum = int(m[i].sum())
        if row_sum != X.spans[i] + 1:
            out.append(f"subtask {i}: row sum {row_sum} != declared span {X.spans[i]} + 1")
        run = X.run_of(i, p)
        if run is None:
            out.append(f"subtask {i}: selected cells are not one UAV over consecutive slots")
            continue
        if run.start_slot + run.span > n:
            out.append(f"subtask {i}: run {run} exceeds the {n}-slot horizon")
        if i == 0 and (run.uav != roles.initiator or run.start_slot != 1):
            out.append(f"subtask 0 must start at slot 1 on UAV {roles.initiator}, got {run}")
        if i == q - 1 and run.uav != roles.receiver:
            out.append(f"subtask {q - 1} must execute on UAV {roles.receiver}, got {run}")
        if not catalog.has_state(run.uav, dag.subtasks[i].required_state_type):
            out.append(
                f"subtask {i}: UAV {run.uav} lacks state {dag.subtasks[i].required_state_type!r}"
            )
    return tuple(out)


@dataclass(frozen=True)
class Problem:
    """Everything a mapping is evaluated against."""

    graph: EfsmsGraph | SpaceTimeGraph
    dag: TaskDag
    catalog: StateCatalog
    compute_hz: tuple[float, ...]
    roles: Roles
    unit_bit_route: bool = False
    volumes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.compute_hz) != self.catalog.uav_count:
            raise ValueError("one compute capacity per UAV required")
        if any(not c > 0 for c in self.compute_hz):
            raise ValueError("compute capacities must be > 0")
        if not (1 <= self.roles.initiator <= self.catalog.uav_count and 1 <= self.roles.receiver <= self.catalog.uav_count):
            raise ValueError("role UAV indices out of range")
        object.__setattr__(self, "volumes", task_volume(self.dag))
        self.volumes.setflags(write=False)

    @property
    def grid(self) -> SlotGrid:
        return self.graph.grid

    @property
    def uav_count(self) -> int:
        return self.catalog.uav_count


@dataclass(frozen=True)
class RouteRecord:
    edge: tuple[int, int]
    volume: float
    route: RouteResult


@dataclass(frozen=True)
class SubtaskTiming:
    subtask: int
    run: Run
    arrival: float
    start: float
    finish: float
    routes: tuple[RouteRecord, ...]


@dataclass
class ScheduleResult:
    """Outcome of evaluating one mapping; ``ok`` False carries the reason."""

    ok: bool
    reason: str | None
    total_latency: float
    timings: tuple[SubtaskTiming | None, ...]
    consumed_time: np.ndarray
    violations: tuple[str, ...] = ()


class _Trial(NamedTuple):
    status: str  # ok | no_route | slot_missed | horizon
    detail: str
    arrival: float
    start: float
    finish: float
    span: int
    routes: tuple[RouteRecord, ...]


class Scheduler:
    """Incremental engine behind ``evaluate``; also used by the baselines'
    earliest-slot placement. Subtasks must be fed in topological order.

    ``route_cache`` may be shared across schedules of the same problem: keys
    carry every input a route depends on (endpoints, volume, mode, and the
    nonzero consumed-time entries), so sharing never changes results.
    """

    def __init__(self, problem: Problem, route_cache: dict | None = None):
        self.problem = problem
        self.volumes = problem.volumes
        p, n = problem.uav_count, problem.grid.slot_count
        self.consumed = np.zeros((p, n))
        self.busy_until: dict[tuple[int, int], float] = {}
        self.timings: list[SubtaskTiming | None] = [None] * problem.dag.size
        self.route_cache = route_cache
        self._consumed_key: tuple = ()

    def _route(self, src: StNodeId, dst: StNodeId, vol: float) -> RouteResult:
        problem = self.problem
        if self.route_cache is None:
            return shortest_route(problem.graph, src, dst, vol,
                                  consumed=self.consumed, unit_bit=problem.unit_bit_route)
        key = (src, dst, vol, self._consumed_key)
        route = self.route_cache.get(key)
        if route is None:
            route = shortest_route(problem.graph, src, dst, vol,
                                   consumed=self.consumed, unit_bit=problem.unit_bit_route)
            if len(self.route_cache) < 500_000:
                self.route_cache[key] = route
        return route

    def trial(self, i: int, uav: int, start_slot: int) -> _Trial:
        """Compute timing for placing subtask i at (uav, start_slot) without
        committing; the span is derived from the timing."""
        problem = self.problem
        dag = problem.dag
        dt = problem.grid.slot_length
        n = problem.grid.slot_count
        records = []
        arrival = 0.0
        for j in dag.predecessors(i):
            tj = self.timings[j]
            if tj is None:
                raise RuntimeError(f"subtask {j} not placed before its successor {i}")
            src = StNodeId(tj.run.uav, tj.run.start_slot + tj.run.span)
            dst = StNodeId(uav, start_slot)
            vol = float(self.volumes[j] * dag.subtasks[j].scaling)
            route = self._route(src, dst, vol)
            if not route.found:
                return _Trial("no_route", f"dag edge ({j}, {i}): no route {src} -> {dst}", 0.0, 0.0, 0.0, -1, ())
            records.append(RouteRecord((j, i), vol, route))
            ready = tj.finish + route.delay
            if ready > arrival:
                arrival = ready
        slot_open = (start_slot - 1) * dt
        compute_time = float(self.volumes[i]) * dag.subtasks[i].complexity / problem.compute_hz[uav - 1]
        start = max(arrival, slot_open, self.busy_until.get((uav, start_slot), 0.0))
        while True:
            offset = start - slot_open
            if offset >= dt:
                return _Trial("slot_missed", f"subtask {i}: execution cannot begin inside slot {start_slot}", arrival, start, 0.0, -1, tuple(records))
            span = math.ceil((offset + compute_time) / dt) - 1
            if start_slot + span > n:
                return _Trial("horizon", f"subtask {i}: computation spans past slot {n}", arrival, start, 0.0, span, tuple(records))
            blocked = max(
                (self.busy_until.get((uav, k), 0.0) for k in range(start_slot, start_slot + span + 1)),
                default=0.0,
            )
            if blocked > start:
                start = blocked
                continue
            break
        finish = start + compute_time
        return _Trial("ok", "", arrival, start, finish, span, tuple(records))

    def commit(self, i: int, uav: int, start_slot: int, trial: _Trial) -> None:
        problem = self.problem
        dt = problem.grid.slot_length
        for rec in trial.routes:
            for e in rec.route.edges:
                if e.kind in ("tx", "state_in"):
                    d0, k0 = e.src.uav - 1, e.src.slot - 1
                    self.consumed[d0, k0] = min(self.consumed[d0, k0] + e.seconds, dt)
        for k in range(start_slot, start_slot + trial.span + 1):
            lo = (k - 1) * dt
            hi = k * dt
            overlap = min(trial.finish, hi) - max(trial.start, lo)
            if overlap > 0:
                d0 = uav - 1
                self.consumed[d0, k - 1] = min(self.consumed[d0, k - 1] + overlap, dt)
            key = (uav, k)
            if trial.finish > self.busy_until.get(key, 0.0):
                self.busy_until[key] = trial.finish
        if self.route_cache is not None:
            flat = self.consumed.reshape(-1)
            nz = np.nonzero(flat)[0]
            self._consumed_key = tuple(zip(nz.tolist(), flat[nz].tolist()))
        self.timings[i] = SubtaskTiming(i, Run(uav, start_slot, trial.span), trial.arrival, trial.start, trial.finish, trial.routes)


def evaluate(X: MappingDecision, problem: Problem, route_cache: dict | None = None) -> ScheduleResult:
    """Latency of one mapping: topological sweep with routed transfers.

    Each subtask becomes ready at the max over predecessors of their finish
    time plus the routed transfer delay of their scaled output volume, then
    computes for volume*complexity/capacity seconds on its UAV, serialized
    after earlier subtasks sharing any of its node-slots. The declared span
    of every run must match the computed slot span exactly and execution
    must begin inside the declared start slot. The result is the sink's
    finish time.
    """
    violations = check_constraints(X, problem.dag, problem.catalog, problem.grid, problem.roles)
    p, n = problem.uav_count, problem.grid.slot_count
    if violations:
        return ScheduleResult(False, "constraints", math.inf, (None,) * problem.dag.size, np.zeros((p, n)), violations)
    sched = Scheduler(problem, route_cache=route_cache)
    runs = X.runs(p)
    for i in topological_order(problem.dag):
        run = runs[i]
        trial = sched.trial(i, run.uav, run.start_slot)
        if trial.status == "no_route":
            return ScheduleResult(False, trial.detail, math.inf, tuple(sched.timings), sched.consumed, ())
        if trial.status in ("slot_missed", "horizon"):
            return ScheduleResult(False, trial.detail, math.inf, tuple(sched.timings), sched.consumed, (trial.detail,))
        if trial.span != run.span:
            detail = f"subtask {i}: declared span {run.span} but timing requires {trial.span}"
            return ScheduleResult(False, detail, math.inf, tuple(sched.timings), sched.consumed, (detail,))
        sched.commit(i, run.uav, run.start_slot, trial)
    total = sched.timings[problem.dag.size - 1].finish
    return ScheduleResult(True, None, total, tuple(sched.timings), sched.consumed, ())
