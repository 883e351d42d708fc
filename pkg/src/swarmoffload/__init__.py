"""Task offloading onto dynamic heterogeneous UAV swarms.

Builds a periodic space-time graph from circular flight trajectories and a
line-of-sight link budget, extends it with per-UAV capability state nodes,
evaluates DAG task mappings against it, and searches for the minimum-latency
mapping with a constrained binary particle swarm, compared against
cloud / local / load-balancing baselines.
"""

from swarmoffload.geometry import Position3, SlotGrid, TrajectoryParams, distance, position_at, sample_fleet
from swarmoffload.channel import ChannelDomainError, ChannelParams, LinkMetrics, erfc, link_metrics, path_loss
from swarmoffload.stgraph import (
    RouteResult,
    SpaceTimeGraph,
    StNodeId,
    assemble,
    build_interslot,
    build_slot_matrix,
    build_space_time_graph,
    shortest_route,
)
from swarmoffload.efsm import EfsmsGraph, FsmSpec, StateCatalog, StateNodeId, build_efsmsg, ismember, validate_fsm
from swarmoffload.taskmap import (
    MappingDecision,
    Problem,
    Roles,
    Run,
    ScheduleResult,
    Subtask,
    TaskDag,
    check_constraints,
    evaluate,
    feasible_nodes,
    task_volume,
)
from swarmoffload.solver import (
    BaselineResult,
    InfeasibleScenarioError,
    SolverConfig,
    SolverResult,
    inertia,
    optimize_mapping,
    sigmoid,
    solve_cloud,
    solve_greedy_lb,
    solve_local,
    solve_pick_kx,
    solve_wrr,
)
from swarmoffload.scenario import Scenario, ScenarioError, build_problem, load_scenario

__version__ = "0.1.0"
