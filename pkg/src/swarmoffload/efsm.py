"""Per-UAV capability state machines and the state-extended space-time graph.

Each UAV owns a subset of the catalog's state types; owning a type means the
UAV can process subtasks requiring it, at a per-bit cost. State nodes attach
to their UAV in every slot: entering a state costs its per-bit processing
time, leaving it and switching between states are free (both happen inside
the UAV), and a state node holds its data across slot boundaries for free,
which is what lets computation span slots without paying cache latency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from swarmoffload import _routing
from swarmoffload.stgraph import SpaceTimeGraph, StNodeId, _RoutableGraph


@dataclass(frozen=True)
class FsmSpec:
    """State machine of one UAV: states, triggers, and the transition map.

    Kept for validation and documentation; the latency model only consults
    state membership because trigger and switch costs are zero.
    """

    states: tuple[str, ...]
    triggers: tuple[str, ...]
    transitions: tuple[tuple[str, str, str], ...]  # (src_state, trigger, dst_state)
    initial: str
    terminals: tuple[str, ...]


@dataclass(frozen=True)
class FsmValidationReport:
    valid: bool
    missing_initial: bool
    empty_terminals: bool
    stray_terminals: tuple[str, ...]
    dangling: tuple[str, ...]
    unreachable: tuple[str, ...]

    def __str__(self) -> str:
        if self.valid:
            return "fsm: valid"
        lines = ["fsm: INVALID"]
        if self.missing_initial:
            lines.append("  initial state not in the state set")
        if self.empty_terminals:
            lines.append("  terminal state set is empty")
        for t in self.stray_terminals:
            lines.append(f"  terminal state {t!r} not in the state set")
        for d in self.dangling:
            lines.append(f"  dangling transition element {d}")
        for u in self.unreachable:
            lines.append(f"  state {u!r} unreachable from the initial state")
        return "\n".join(lines)


def validate_fsm(spec: FsmSpec) -> FsmValidationReport:
    """Report-style check: reachability, dangling transitions, terminal set."""
    states = set(spec.states)
    triggers = set(spec.triggers)
    missing_initial = spec.initial not in states
    empty_terminals = len(spec.terminals) == 0
    stray_terminals = tuple(t for t in spec.terminals if t not in states)
    dangling = []
    adjacency: dict[str, list[str]] = {s: [] for s in spec.states}
    for src, trig, dst in spec.transitions:
        ok = True
        if src not in states:
            dangling.append(f"{(src, trig, dst)}: source {src!r} undeclared")
            ok = False
        if dst not in states:
            dangling.append(f"{(src, trig, dst)}: target {dst!r} undeclared")
            ok = False
        if trig not in triggers:
            dangling.append(f"{(src, trig, dst)}: trigger {trig!r} undeclared")
            ok = False
        if ok:
            adjacency[src].append(dst)
    unreachable: tuple[str, ...] = ()
    if not missing_initial:
        seen = {spec.initial}
        stack = [spec.initial]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        unreachable = tuple(s for s in spec.states if s not in seen)
    valid = not (missing_initial or empty_terminals or stray_terminals or dangling or unreachable)
    return FsmValidationReport(valid, missing_initial, empty_terminals, stray_terminals, tuple(dangling), unreachable)


class StateCatalog:
    """Which state types each UAV owns and the per-bit cost of each.

    A missing (uav, type) entry means the UAV lacks that state; hardware
    capability does not vary by slot.
    """

    def __init__(self, uav_count: int, state_types: tuple[str, ...] | list[str], unit_bit_cost: dict):
        self.uav_count = int(uav_count)
        self.state_types = tuple(state_types)
        if len(set(self.state_types)) != len(self.state_types):
            raise ValueError("duplicate state types in catalog")
        costs = {}
        for (uav, stype), ct in unit_bit_cost.items():
            uav = int(uav)
            if not 1 <= uav <= self.uav_count:
                raise ValueError(f"catalog uav {uav} out of range 1..{self.uav_count}")
            if stype not in self.state_types:
                raise ValueError(f"catalog references unknown state type {stype!r}")
            ct = float(ct)
            if not ct > 0:
                raise ValueError(f"unit-bit cost for ({uav}, {stype!r}) must be > 0, got {ct}")
            costs[(uav, stype)] = ct
        self.unit_bit_cost = costs

    def has_state(self, uav: int, state_type: str) -> bool:
        if state_type not in self.state_types:
            raise KeyError(f"unknown state type {state_type!r}")
        return (uav, state_type) in self.unit_bit_cost

    def cost(self, uav: int, state_type: str) -> float:
        return self.unit_bit_cost[(uav, state_type)]

    def states_of(self, uav: int) -> tuple[str, ...]:
        return tuple(s for s in self.state_types if (uav, s) in self.unit_bit_cost)

    def members_of(self, state_type: str) -> tuple[int, ...]:
        if state_type not in self.state_types:
            raise KeyError(f"unknown state type {state_type!r}")
        return tuple(u for u in range(1, self.uav_count + 1) if (u, state_type) in self.unit_bit_cost)

    def to_config(self) -> dict:
        by_uav = {
            str(u): {s: self.unit_bit_cost[(u, s)] for s in self.states_of(u)}
            for u in range(1, self.uav_count + 1)
        }
        return {"uav_count": self.uav_count, "types": list(self.state_types), "unit_bit_cost_s": by_uav}

    @classmethod
    def from_config(cls, cfg: dict) -> "StateCatalog":
        costs = {}
        for uav, per_type in cfg["unit_bit_cost_s"].items():
            for stype, ct in per_type.items():
                costs[(int(uav), stype)] = float(ct)
        return cls(cfg["uav_count"], tuple(cfg["types"]), costs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, StateCatalog)
            and self.uav_count == other.uav_count
            and self.state_types == other.state_types
            and self.unit_bit_cost == other.unit_bit_cost
        )


class StateNodeId(NamedTuple):
    uav: int
    slot: int
    state_type: str


def ismember(state_type: str, node: StNodeId, catalog: StateCatalog) -> bool:
    """True iff the node's UAV owns the given state type (slot-independent)."""
    if not 1 <= node.uav <= catalog.uav_count:
        raise KeyError(f"uav {node.uav} out of range 1..{catalog.uav_count}")
    return catalog.has_state(node.uav, state_type)


class EfsmsGraph(_RoutableGraph):
    """Space-time graph augmented with per-(UAV, slot) state nodes."""

    def __init__(self, base: SpaceTimeGraph, catalog: StateCatalog, fsm_specs: dict[int, FsmSpec] | None = None):
        if catalog.uav_count != base.uav_count:
            raise ValueError(
                f"catalog covers {catalog.uav_count} UAVs but the graph has {base.uav_count}"
            )
        if fsm_specs:
            for uav, spec in fsm_specs.items():
                owned = set(catalog.states_of(uav))
                declared = set(spec.states)
                if not owned <= declared:
                    raise ValueError(
                        f"uav {uav}: catalog states {sorted(owned - declared)} missing from its FSM spec"
                    )
        p, n = base.uav_count, base.grid.slot_count
        labels = list(base._labels)
        state_index: dict[tuple[int, int, str], int] = {}
        for k in range(1, n + 1):
            for d in range(1, p + 1):
                for stype in catalog.states_of(d):
                    state_index[(d, k, stype)] = len(labels)
                    labels.append(StateNodeId(d, k, stype))

        edge_spec = []
        for u in range(base.node_count):
            for e in range(base._indptr[u], base._indptr[u + 1]):
                edge_spec.append((
                    u,
                    int(base._targets[e]),
                    int(base._kinds[e]),
                    float(base._perbit[e]),
                    int(base._cache_node[e]),
                    int(base._crosses[e]),
                ))
        switch_map: dict[int, set[tuple[str, str]]] = {}
        if fsm_specs:
            for uav, spec in fsm_specs.items():
                pairs = set()
                for src, _, dst in spec.transitions:
                    if src != dst and catalog.has_state(uav, src) and catalog.has_state(uav, dst):
                        pairs.add((src, dst))
                switch_map[uav] = pairs
        for (d, k, stype), sid in state_index.items():
            uav_node = (k - 1) * p + (d - 1)
            ct = catalog.cost(d, stype)
            edge_spec.append((uav_node, sid, _routing.STATE_IN, ct, -1, 0))
            edge_spec.append((sid, uav_node, _routing.STATE_OUT, 0.0, -1, 0))
            wrap = k == n
            hold_target = state_index[(d, 1 if wrap else k + 1, stype)]
            edge_spec.append((sid, hold_target, _routing.STATE_HOLD, 0.0, -1, 1 if wrap else 0))
            for src_t, dst_t in sorted(switch_map.get(d, ())):
                if src_t == stype:
                    edge_spec.append((sid, state_index[(d, k, dst_t)], _routing.STATE_SWITCH, 0.0, -1, 0))

        super().__init__(base.grid, p, labels, edge_spec, base._cache_defaults, base.max_periods)
        self.base = base
        self.catalog = catalog
        self._state_index = state_index

    @property
    def state_node_count(self) -> int:
        return len(self._state_index)

    def state_node(self, uav: int, slot: int, state_type: str) -> StateNodeId:
        key = (uav, slot, state_type)
        if key not in self._state_index:
            raise KeyError(f"no state node for {key}")
        return StateNodeId(*key)


def build_efsmsg(base: SpaceTimeGraph, catalog: StateCatalog, fsm_specs: dict[int, FsmSpec] | None = None) -> EfsmsGraph:
    """Attach state nodes and their zero-cost trigger edges to the base graph."""
    return EfsmsGraph(base, catalog, fsm_specs)
