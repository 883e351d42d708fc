"""Minimum-latency mapping search: constrained adaptive binary PSO and the
comparison strategies (capacity-weighted round robin, greedy least-loaded,
sample-K load balancing, cloud, local).

Particle positions are binary mapping matrices. Bits are sampled through a
sigmoid of the velocity, masked by state membership, then repaired row by
row to the one-UAV consecutive-slot run structure: among the sampled maximal
segments that are admissible runs the highest-probability one is kept; rows
left without an admissible segment are resampled from the feasible run set
weighted by their mean sigmoid probability. Every position a particle ever
holds therefore satisfies the structural constraints.

A mapping only evaluates to a finite latency when every declared span equals
the span its timing actually needs, which makes blindly sampled spans almost
always dead at realistic sizes. Since the consistent mappings are exactly
the (UAV, start slot) assignments with their timing-derived spans, the
solver snaps each proposed position's spans to the derived value before the
particle holds it (``span_snap``, on by default); the evaluation itself
never repairs anything.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from swarmoffload.channel import ChannelParams, link_metrics
from swarmoffload.taskmap import (
    MappingDecision,
    Problem,
    Run,
    ScheduleResult,
    Scheduler,
    TaskDag,
    check_constraints,
    evaluate,
    feasible_nodes,
    task_volume,
    topological_order,
)


class InfeasibleScenarioError(RuntimeError):
    """No admissible run exists for some subtask in this scenario."""


@dataclass(frozen=True)
class SolverConfig:
    swarm_size: int = 500
    max_iterations: int = 1000
    gamma1: float = 1.0
    gamma2: float = 1.0
    mu_start: float = 1.5
    mu_end: float = 0.5
    seed: int = 0
    velocity_clamp: float = 6.0
    init_velocity: float = 4.0
    span_snap: bool = True

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.mu_start >= self.mu_end > 0):
            raise ValueError("inertia bounds must satisfy mu_start >= mu_end > 0")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("learning factors must be >= 0")
        if not self.velocity_clamp > 0:
            raise ValueError("velocity_clamp must be > 0")

    @classmethod
    def from_config(cls, cfg: dict, seed: int = 0) -> "SolverConfig":
        kwargs = {k: cfg[k] for k in (
            "swarm_size", "max_iterations", "gamma1", "gamma2",
            "mu_start", "mu_end", "velocity_clamp", "init_velocity", "span_snap",
        ) if k in cfg}
        kwargs["seed"] = int(cfg.get("seed", seed))
        if "swarm_size" in kwargs:
            kwargs["swarm_size"] = int(kwargs["swarm_size"])
        if "max_iterations" in kwargs:
            kwargs["max_iterations"] = int(kwargs["max_iterations"])
        return cls(**kwargs)


def inertia(iteration: int, cfg: SolverConfig) -> float:
    """Nonlinear inertia decay from mu_start at iteration 0 to mu_end at the last."""
    frac = iteration / cfg.max_iterations
    return cfg.mu_start - (cfg.mu_start - cfg.mu_end) * frac * frac


def sigmoid(v):
    """Map velocities to bit probabilities in (0, 1)."""
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(np.negative(v)))
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out


def velocity_update(velocity, position, personal_best, global_best, inertia_weight, cfg: SolverConfig, rng) -> np.ndarray:
    """One velocity step: inertia plus cognitive and social pulls with fresh
    per-scalar uniform draws, clamped so the sigmoid stays responsive."""
    velocity = np.asarray(velocity, dtype=np.float64)
    beta1 = rng.random(velocity.shape)
    beta2 = rng.random(velocity.shape)
    v = (
        inertia_weight * velocity
        + cfg.gamma1 * beta1 * (personal_best - position)
        + cfg.gamma2 * beta2 * (global_best - position)
    )
    return np.clip(v, -cfg.velocity_clamp, cfg.velocity_clamp)


class MappingSpace:
    """Feasible-run tables and membership mask for one problem, precompiled
    for batched position sampling and repair."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.p = problem.uav_count
        self.n = problem.grid.slot_count
        self.q = problem.dag.size
        self.C = self.p * self.n
        self.row_runs: list[np.ndarray] = []
        for i in range(self.q):
            runs = feasible_nodes(i, problem.dag, problem.catalog, problem.grid, problem.roles)
            if not runs:
                raise InfeasibleScenarioError(
                    f"subtask {i} ({problem.dag.subtasks[i].name!r}) has no admissible run: "
                    f"no capable UAV for state {problem.dag.subtasks[i].required_state_type!r}"
                )
            self.row_runs.append(np.array(runs, dtype=np.int64))
        mask = np.zeros((self.q, self.C), dtype=bool)
        for i in range(self.q):
            stype = problem.dag.subtasks[i].required_state_type
            for d in problem.catalog.members_of(stype):
                mask[i, (d - 1)::self.p] = True
        self.member_mask = mask

    def bits_from_runs(self, runs: np.ndarray) -> np.ndarray:
        """Binary matrices (batch, q, C) for a batch of run tables (batch, q, 3)."""
        batch = runs.shape[0]
        bits = np.zeros((batch, self.q, self.n, self.p), dtype=np.uint8)
        rows = np.arange(batch)
        for r in range(self.q):
            d0 = runs[:, r, 0] - 1
            k0 = runs[:, r, 1] - 1
            rho = runs[:, r, 2]
            for off in range(int(rho.max()) + 1):
                m = off <= rho
                bits[rows[m], r, k0[m] + off, d0[m]] = 1
        return bits.reshape(batch, self.q, self.C)


def position_update(probs: np.ndarray, space: MappingSpace, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample bits from the probabilities, mask by membership, and repair to
    run structure. Accepts one particle (q, C) or a batch (M, q, C); returns
    (bits, runs) with matching leading shape."""
    single = probs.ndim == 2
    if single:
        probs = probs[None, :, :]
    draws = rng.random(probs.shape)
    sampled = (probs >= draws) & space.member_mask
    resample_u = rng.random(probs.shape[:2])
    bits, runs = _repair(probs, sampled, resample_u, space)
    if single:
        return bits[0], runs[0]
    return bits, runs


def _repair(probs: np.ndarray, sampled: np.ndarray, resample_u: np.ndarray, space: MappingSpace) -> tuple[np.ndarray, np.ndarray]:
    M, q, C = probs.shape
    p, n = space.p, space.n
    bits4 = sampled.reshape(M, q, n, p)
    s4 = probs.reshape(M, q, n, p)
    bit_cs = np.zeros((M, q, n + 1, p))
    np.cumsum(bits4, axis=2, out=bit_cs[:, :, 1:, :])
    s_cs = np.zeros((M, q, n + 1, p))
    np.cumsum(s4, axis=2, out=s_cs[:, :, 1:, :])
    padded = np.zeros((M, q, n + 2, p), dtype=bool)
    padded[:, :, 1:-1, :] = bits4
    runs_out = np.empty((M, q, 3), dtype=np.int64)
    new_bits = np.zeros((M, q, n, p), dtype=np.uint8)
    rows = np.arange(M)
    for r in range(q):
        table = space.row_runs[r]
        d0 = table[:, 0] - 1
        k0 = table[:, 1] - 1
        rho = table[:, 2]
        seg = bit_cs[:, r, k0 + rho + 1, d0] - bit_cs[:, r, k0, d0]
        fully_selected = seg == (rho + 1)
        maximal = (~padded[:, r, k0, d0]) & (~padded[:, r, k0 + rho + 2, d0])
        candidate = fully_selected & maximal
        score = s_cs[:, r, k0 + rho + 1, d0] - s_cs[:, r, k0, d0]
        has_candidate = candidate.any(axis=1)
        best = np.argmax(np.where(candidate, score, -np.inf), axis=1)
        # resample weight: mean sigmoid over the run's cells (length-neutral)
        cum = np.cumsum(score / (rho + 1), axis=1)
        u = resample_u[:, r] * cum[:, -1]
        resampled = np.minimum((u[:, None] >= cum).sum(axis=1), table.shape[0] - 1)
        chosen = np.where(has_candidate, best, resampled)
        runs_out[:, r, :] = table[chosen]
        cd = d0[chosen]
        ck = k0[chosen]
        crho = rho[chosen]
        for off in range(int(crho.max()) + 1):
            m = off <= crho
            new_bits[rows[m], r, ck[m] + off, cd[m]] = 1
    return new_bits.reshape(M, q, C), runs_out


@dataclass
class SolverResult:
    strategy: str
    best_mapping: MappingDecision | None
    best_latency: float
    trace: tuple[float, ...]
    evaluations: int
    feasible: bool


def _schedule_assignment(problem: Problem, runs_row: np.ndarray, route_cache: dict | None = None) -> tuple[float, np.ndarray | None]:
    """Latency of a (UAV, start slot) assignment with timing-derived spans.

    Returns (latency, derived runs) or (inf, None) when some subtask cannot
    begin inside its declared slot, spans past the horizon, or has no route
    from a predecessor.
    """
    sched = Scheduler(problem, route_cache=route_cache)
    derived = np.array(runs_row, copy=True)
    n = problem.grid.slot_count
    for i in topological_order(problem.dag):
        uav, start_slot = int(runs_row[i, 0]), int(runs_row[i, 1])
        tr = sched.trial(i, uav, start_slot)
        if tr.status != "ok" or start_slot + tr.span > n:
            return math.inf, None
        sched.commit(i, uav, start_slot, tr)
        derived[i, 2] = tr.span
    return sched.timings[problem.dag.size - 1].finish, derived


def optimize_mapping(problem: Problem, cfg: SolverConfig, fitness_cache: dict | None = None, position_hook=None) -> SolverResult:
    """Run the swarm search and return the best mapping found.

    The fitness of a position is its evaluated latency; positions whose
    declared spans are inconsistent with the computed timing are infinitely
    unfit. With ``span_snap`` (default) each proposal keeps its sampled
    (UAV, start slot) choices but holds the timing-derived spans, so the
    swarm searches the consistent subspace directly. ``fitness_cache`` may
    be shared across runs on the same problem. ``position_hook(bits, runs)``
    is called with every generation's held positions (including the initial
    swarm), for auditing.
    """
    space = MappingSpace(problem)
    rng = np.random.default_rng(cfg.seed)
    M, q, C = cfg.swarm_size, space.q, space.C
    p, n = space.p, space.n

    cache = {} if fitness_cache is None else fitness_cache
    route_cache = cache.setdefault("__routes__", {}) if isinstance(cache, dict) else {}
    evaluations = 0

    def fitness_of(runs_row: np.ndarray) -> tuple[float, np.ndarray | None]:
        nonlocal evaluations
        if cfg.span_snap:
            key = runs_row[:, :2].tobytes()
        else:
            key = runs_row.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        evaluations += 1
        if cfg.span_snap:
            value = _schedule_assignment(problem, runs_row, route_cache)
        else:
            mapping = MappingDecision.from_runs([Run(*map(int, row)) for row in runs_row], p, n)
            result = evaluate(mapping, problem, route_cache=route_cache)
            value = (result.total_latency if result.ok else math.inf, None)
        cache[key] = value
        return value

    def score_batch(runs_batch: np.ndarray) -> np.ndarray:
        fit = np.empty(runs_batch.shape[0])
        for m in range(runs_batch.shape[0]):
            fit[m], derived = fitness_of(runs_batch[m])
            if derived is not None:
                runs_batch[m] = derived
        return fit

    runs_now = np.empty((M, q, 3), dtype=np.int64)
    for r in range(q):
        table = space.row_runs[r]
        runs_now[:, r, :] = table[rng.integers(0, len(table), size=M)]
    velocity = rng.uniform(-cfg.init_velocity, cfg.init_velocity, size=(M, q, C))

    fitness = score_batch(runs_now)
    bits_now = space.bits_from_runs(runs_now)
    if position_hook is not None:
        position_hook(bits_now, runs_now)
    position = bits_now.astype(np.float64)
    pbest_pos = position.copy()
    pbest_runs = runs_now.copy()
    pbest_fit = fitness.copy()
    g_idx = int(np.argmin(pbest_fit))
    g_fit = float(pbest_fit[g_idx])
    g_pos = pbest_pos[g_idx].copy()
    g_runs = pbest_runs[g_idx].copy()
    trace = [g_fit]

    for it in range(1, cfg.max_iterations + 1):
        mu = inertia(it, cfg)
        velocity = velocity_update(velocity, position, pbest_pos, g_pos[None, :, :], mu, cfg, rng)
        probs = sigmoid(velocity)
        draws = rng.random((M, q, C))
        sampled = (probs >= draws) & space.member_mask
        resample_u = rng.random((M, q))
        _, runs_now = _repair(probs, sampled, resample_u, space)
        fitness = score_batch(runs_now)
        bits_now = space.bits_from_runs(runs_now)
        position = bits_now.astype(np.float64)
        improved = fitness < pbest_fit
        if improved.any():
            pbest_fit = np.where(improved, fitness, pbest_fit)
            pbest_pos[improved] = position[improved]
            pbest_runs[improved] = runs_now[improved]
        b = int(np.argmin(pbest_fit))
        if pbest_fit[b] < g_fit:
            g_fit = float(pbest_fit[b])
            g_pos = pbest_pos[b].copy()
            g_runs = pbest_runs[b].copy()
        trace.append(g_fit)
        if position_hook is not None:
            position_hook(bits_now, runs_now)

    best_mapping = MappingDecision.from_runs([Run(*map(int, row)) for row in g_runs], p, n)
    return SolverResult("pso", best_mapping, g_fit, tuple(trace), evaluations, math.isfinite(g_fit))


# --- comparison strategies ---------------------------------------------------

@dataclass(frozen=True)
class BaselineResult:
    strategy: str
    mapping: MappingDecision | None
    latency: float
    feasible: bool
    schedule: ScheduleResult | None = None


@dataclass(frozen=True)
class CloudParams:
    """Offload everything to a remote server over one long uplink."""

    distance_m: float = 50_000.0
    server_hz: float = 1e10
    ber_threshold: float = 0.49  # relaxed so the long link still demodulates
    uplink_bps: float | None = None  # overrides the channel-derived rate

    @classmethod
    def from_config(cls, cfg: dict) -> "CloudParams":
        return cls(
            distance_m=float(cfg.get("distance_m", cls.distance_m)),
            server_hz=float(cfg.get("server_hz", cls.server_hz)),
            ber_threshold=float(cfg.get("ber_threshold", cls.ber_threshold)),
            uplink_bps=(float(cfg["uplink_bps"]) if cfg.get("uplink_bps") is not None else None),
        )


@dataclass(frozen=True)
class LocalParams:
    """Compute everything on the requesting terminal, no transfers."""

    terminal_hz: float = 5e8

    @classmethod
    def from_config(cls, cfg: dict) -> "LocalParams":
        return cls(terminal_hz=float(cfg.get("terminal_hz", cls.terminal_hz)))


def _pinned(problem: Problem, i: int) -> bool:
    return i == 0 or i == problem.dag.size - 1


def _feasible_uavs(problem: Problem, i: int) -> list[int]:
    stype = problem.dag.subtasks[i].required_state_type
    members = set(problem.catalog.members_of(stype))
    q = problem.dag.size
    uavs = sorted(members)
    if i == 0:
        uavs = [u for u in uavs if u == problem.roles.initiator]
    if i == q - 1:
        uavs = [u for u in uavs if u == problem.roles.receiver]
    return uavs


def _place_earliest(problem: Problem, assignment: list[int]) -> MappingDecision | None:
    """Give each assigned subtask the earliest start slot whose timing is
    consistent; the span follows from the timing."""
    sched = Scheduler(problem)
    n = problem.grid.slot_count
    runs: list[Run | None] = [None] * problem.dag.size
    for i in topological_order(problem.dag):
        uav = assignment[i]
        start_slots = (1,) if i == 0 else range(1, n + 1)
        for k in start_slots:
            tr = sched.trial(i, uav, k)
            if tr.status == "ok":
                sched.commit(i, uav, k, tr)
                runs[i] = Run(uav, k, tr.span)
                break
        else:
            return None
    return MappingDecision.from_runs(runs, problem.uav_count, n)


def _mapped_result(strategy: str, problem: Problem, mapping: MappingDecision | None) -> BaselineResult:
    if mapping is None:
        return BaselineResult(strategy, None, math.inf, False)
    result = evaluate(mapping, problem)
    if not result.ok:
        return BaselineResult(strategy, mapping, math.inf, False, result)
    return BaselineResult(strategy, mapping, result.total_latency, True, result)


def solve_wrr(problem: Problem) -> BaselineResult:
    """Weighted round robin: UAVs take turns proportionally to compute
    capacity (integer weights, fastest first); each non-pinned subtask gets
    the next capable UAV in the rotation."""
    caps = problem.compute_hz
    p = problem.uav_count
    c_min = min(caps)
    weights = [max(1, round(c / c_min)) for c in caps]
    order = sorted(range(1, p + 1), key=lambda u: (-caps[u - 1], u))
    rotation = [u for u in order for _ in range(weights[u - 1])]
    pointer = 0
    assignment = [0] * problem.dag.size
    for i in topological_order(problem.dag):
        feas = _feasible_uavs(problem, i)
        if not feas:
            return BaselineResult("wrr", None, math.inf, False)
        if _pinned(problem, i):
            assignment[i] = feas[0]
            continue
        fset = set(feas)
        for step in range(len(rotation)):
            u = rotation[(pointer + step) % len(rotation)]
            if u in fset:
                assignment[i] = u
                pointer = (pointer + step + 1) % len(rotation)
                break
        else:
            return BaselineResult("wrr", None, math.inf, False)
    return _mapped_result("wrr", problem, _place_earliest(problem, assignment))


def solve_greedy_lb(problem: Problem) -> BaselineResult:
    """Each subtask (topological order) goes to the capable UAV with the
    least accumulated compute load."""
    caps = problem.compute_hz
    volumes = task_volume(problem.dag)
    loads = [0.0] * problem.uav_count
    assignment = [0] * problem.dag.size
    for i in topological_order(problem.dag):
        feas = _feasible_uavs(problem, i)
        if not feas:
            return BaselineResult("greedy_lb", None, math.inf, False)
        if _pinned(problem, i):
            uav = feas[0]
        else:
            uav = min(feas, key=lambda u: (loads[u - 1], u))
        assignment[i] = uav
        loads[uav - 1] += float(volumes[i]) * problem.dag.subtasks[i].complexity / caps[uav - 1]
    return _mapped_result("greedy_lb", problem, _place_earliest(problem, assignment))


def solve_pick_kx(problem: Problem, k: int = 2, seed: int = 0) -> BaselineResult:
    """Sample K capable UAVs uniformly (without replacement) and keep the
    least loaded of the sample."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    caps = problem.compute_hz
    volumes = task_volume(problem.dag)
    loads = [0.0] * problem.uav_count
    assignment = [0] * problem.dag.size
    for i in topological_order(problem.dag):
        feas = _feasible_uavs(problem, i)
        if not feas:
            return BaselineResult("pick_kx", None, math.inf, False)
        if _pinned(problem, i):
            uav = feas[0]
        else:
            kk = min(k, len(feas))
            picks = rng.choice(len(feas), size=kk, replace=False)
            uav = min((feas[int(x)] for x in picks), key=lambda u: (loads[u - 1], u))
        assignment[i] = uav
        loads[uav - 1] += float(volumes[i]) * problem.dag.subtasks[i].complexity / caps[uav - 1]
    return _mapped_result("pick_kx", problem, _place_earliest(problem, assignment))


def solve_cloud(dag: TaskDag, channel: ChannelParams, params: CloudParams) -> BaselineResult:
    """Round trip to a remote server: input volume up, result volume down,
    all subtasks computed serially at the server."""
    volumes = task_volume(dag)
    if params.uplink_bps is not None:
        rate = params.uplink_bps
    else:
        relaxed = dataclasses.replace(channel, ber_threshold=params.ber_threshold)
        lm = link_metrics(params.distance_m, relaxed)
        if not lm.connected:
            return BaselineResult("cloud", None, math.inf, False)
        rate = lm.capacity
    moved = float(volumes[0]) + float(volumes[-1]) * dag.subtasks[-1].scaling
    transfer = 0.0 if math.isinf(rate) else moved / rate
    cycles = sum(float(volumes[i]) * dag.subtasks[i].complexity for i in range(dag.size))
    compute = 0.0 if math.isinf(params.server_hz) else cycles / params.server_hz
    return BaselineResult("cloud", None, transfer + compute, True)


def solve_local(dag: TaskDag, params: LocalParams) -> BaselineResult:
    """Everything computed serially on the requesting terminal."""
    volumes = task_volume(dag)
    cycles = sum(float(volumes[i]) * dag.subtasks[i].complexity for i in range(dag.size))
    latency = 0.0 if math.isinf(params.terminal_hz) else cycles / params.terminal_hz
    return BaselineResult("local", None, latency, True)
