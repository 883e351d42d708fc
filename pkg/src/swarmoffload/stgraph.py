"""Periodic space-time graph over (UAV, slot) nodes and shortest-route queries.

Within a slot, transmission edges carry the per-bit link delay for that
slot's frozen topology. Between consecutive slots every UAV has a cache edge
whose weight is the slot's remaining idle time; the last slot wraps to the
first because the flight trajectories are periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from swarmoffload import _routing
from swarmoffload.channel import ChannelParams, link_metrics
from swarmoffload.geometry import Position3, SlotGrid, TrajectoryParams, sample_fleet


class StNodeId(NamedTuple):
    uav: int   # 1-based
    slot: int  # 1-based


@dataclass(frozen=True)
class StEdge:
    """One directed edge; weight is s/bit for per-bit kinds, seconds otherwise."""

    src: object
    dst: object
    kind: str
    weight: float


@dataclass(frozen=True)
class RouteEdge:
    src: object
    dst: object
    kind: str
    seconds: float  # physical traversal time for the routed volume


@dataclass(frozen=True)
class RouteResult:
    """Outcome of one route query; ``found`` False means no route exists."""

    found: bool
    delay: float
    volume: float
    nodes: tuple          # ((label, period), ...) along the route
    edges: tuple[RouteEdge, ...]

    @classmethod
    def no_route(cls, volume: float) -> "RouteResult":
        return cls(False, math.inf, volume, (), ())


class _RoutableGraph:
    """Shared routing machinery: node labels plus compiled CSR edge arrays."""

    def __init__(self, grid: SlotGrid, uav_count: int, labels: list, edge_spec: list, cache_defaults: np.ndarray, max_periods: int):
        if max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        self.grid = grid
        self.uav_count = uav_count
        self.max_periods = max_periods
        self._labels = tuple(labels)
        self._index = {label: i for i, label in enumerate(labels)}
        # cache_defaults[(k-1)*p + (d-1)] = stored cache weight out of (d, k)
        self._cache_defaults = np.asarray(cache_defaults, dtype=np.float64)
        self._compile(edge_spec)

    def _compile(self, edge_spec: list) -> None:
        # edge_spec entries: (src_idx, dst_idx, kind_code, perbit, cache_idx, crosses)
        n = len(self._labels)
        counts = np.zeros(n + 1, dtype=np.int64)
        for src, _, _, _, _, _ in edge_spec:
            counts[src + 1] += 1
        indptr = np.cumsum(counts)
        fill = indptr[:-1].copy()
        m = len(edge_spec)
        targets = np.zeros(m, dtype=np.int64)
        kinds = np.zeros(m, dtype=np.int8)
        perbit = np.zeros(m, dtype=np.float64)
        cache_node = np.full(m, -1, dtype=np.int64)
        crosses = np.zeros(m, dtype=np.uint8)
        # deterministic within-node edge order: sort by (src, kind, dst)
        for src, dst, kd, pb, ci, cr in sorted(edge_spec, key=lambda e: (e[0], e[2], e[1])):
            pos = fill[src]
            fill[src] += 1
            targets[pos] = dst
            kinds[pos] = kd
            perbit[pos] = pb
            cache_node[pos] = ci
            crosses[pos] = cr
        self._indptr = indptr
        self._targets = targets
        self._kinds = kinds
        self._perbit = perbit
        self._cache_node = cache_node
        self._crosses = crosses

    @property
    def node_count(self) -> int:
        return len(self._labels)

    def node_index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"node {label!r} not in graph") from None

    def label_of(self, index: int):
        return self._labels[index]

    def uavslot_index(self, uav: int, slot: int) -> int:
        if not (1 <= uav <= self.uav_count and 1 <= slot <= self.grid.slot_count):
            raise KeyError(f"(uav={uav}, slot={slot}) out of range")
        return (slot - 1) * self.uav_count + (uav - 1)

    def cache_weights(self, consumed: np.ndarray | None) -> np.ndarray:
        """Cache-edge weight vector for a consumed-time table (p x n seconds)."""
        if consumed is None:
            return self._cache_defaults
        consumed = np.asarray(consumed, dtype=np.float64)
        p, n = self.uav_count, self.grid.slot_count
        if consumed.shape != (p, n):
            raise ValueError(f"consumed table must have shape ({p}, {n}), got {consumed.shape}")
        w = self.grid.slot_length - consumed.T.reshape(-1)
        return np.maximum(w, 0.0)

    @property
    def edges(self) -> tuple[StEdge, ...]:
        out = []
        for u in range(self.node_count):
            for e in range(self._indptr[u], self._indptr[u + 1]):
                kd = int(self._kinds[e])
                if kd in (_routing.TX, _routing.STATE_IN):
                    w = float(self._perbit[e])
                elif kd in (_routing.CACHE, _routing.WRAP):
                    w = float(self._cache_defaults[self._cache_node[e]])
                else:
                    w = 0.0
                out.append(StEdge(self._labels[u], self._labels[self._targets[e]], _routing.KIND_NAMES[kd], w))
        return tuple(out)

    def dump_edges(self) -> str:
        """Plain-text edge list: from_uav,from_slot,to_uav,to_slot,kind,weight.

        State nodes render their uav field as "<uav>.<state_type>".
        """
        lines = []
        for e in self.edges:
            su, ss = _split_label(e.src)
            du, ds = _split_label(e.dst)
            lines.append(f"{su},{ss},{du},{ds},{e.kind},{e.weight!r}")
        return "\n".join(lines) + ("\n" if lines else "")


def _split_label(label):
    if isinstance(label, StNodeId):
        return str(label.uav), str(label.slot)
    # state node: (uav, slot, state_type)
    return f"{label.uav}.{label.state_type}", str(label.slot)


class SpaceTimeGraph(_RoutableGraph):
    """Time-expanded digraph of the fleet over one trajectory period.

    Immutable after construction; route queries take the evaluator's
    consumed-time table as a parameter instead of mutating the graph.
    """

    def __init__(self, grid: SlotGrid, slot_blocks: list[np.ndarray], interslot_blocks: list[np.ndarray], max_periods: int = 2):
        n = grid.slot_count
        if len(slot_blocks) != n:
            raise ValueError(f"expected {n} slot blocks, got {len(slot_blocks)}")
        if len(interslot_blocks) != n:
            raise ValueError(f"expected {n} interslot blocks (the last is the wrap block), got {len(interslot_blocks)}")
        p = int(slot_blocks[0].shape[0])
        for b in slot_blocks:
            if b.shape != (p, p):
                raise ValueError(f"slot block shape mismatch: {b.shape} vs ({p}, {p})")
        dt = grid.slot_length
        cache_defaults = np.empty(p * n, dtype=np.float64)
        for k0, b in enumerate(interslot_blocks):
            if b.shape != (p, p):
                raise ValueError(f"interslot block shape mismatch: {b.shape} vs ({p}, {p})")
            off = b[~np.eye(p, dtype=bool)]
            if off.size and np.isfinite(off).any():
                raise ValueError("interslot blocks must be diagonal (off-diagonal entries absent)")
            diag = np.diagonal(b)
            if np.any(diag < -1e-12) or np.any(diag > dt + 1e-12):
                raise ValueError("interslot weights must lie in [0, slot_length]")
            for d0 in range(p):
                cache_defaults[k0 * p + d0] = min(max(float(diag[d0]), 0.0), dt)

        labels = [StNodeId(d0 + 1, k0 + 1) for k0 in range(n) for d0 in range(p)]
        edge_spec = []
        for k0 in range(n):
            block = slot_blocks[k0]
            for i in range(p):
                for j in range(p):
                    if i == j:
                        continue
                    w = float(block[i, j])
                    if math.isfinite(w):
                        edge_spec.append((k0 * p + i, k0 * p + j, _routing.TX, w, -1, 0))
            wrap = k0 == n - 1
            k1 = 0 if wrap else k0 + 1
            for i in range(p):
                edge_spec.append((
                    k0 * p + i,
                    k1 * p + i,
                    _routing.WRAP if wrap else _routing.CACHE,
                    0.0,
                    k0 * p + i,
                    1 if wrap else 0,
                ))
        super().__init__(grid, p, labels, edge_spec, cache_defaults, max_periods)
        self.slot_blocks = tuple(np.array(b, copy=True) for b in slot_blocks)
        for b in self.slot_blocks:
            b.setflags(write=False)

    @property
    def consumed_time(self) -> np.ndarray:
        """Busy-time table implied by the stored cache weights (p x n seconds)."""
        w = self._cache_defaults.reshape(self.grid.slot_count, self.uav_count).T
        return self.grid.slot_length - w


def build_slot_matrix(positions: list[Position3], params: ChannelParams) -> np.ndarray:
    """Per-slot weighted adjacency: entry (i, j) is the pair's unit-bit delay.

    Disconnected pairs are absent (inf); the diagonal is 0 (a node does not
    transmit to itself). A zero-distance pair is a channel domain error.
    """
    p = len(positions)
    block = np.full((p, p), np.inf)
    np.fill_diagonal(block, 0.0)
    for i in range(p):
        for j in range(i + 1, p):
            d = math.dist(positions[i], positions[j])
            m_ij = link_metrics(d, params)
            if m_ij.connected:
                block[i, j] = m_ij.unit_bit_delay
                block[j, i] = m_ij.unit_bit_delay
    return block


def build_interslot(consumed_column: np.ndarray, grid: SlotGrid) -> np.ndarray:
    """Cache-edge block for one slot boundary from the slot's busy times."""
    t = np.asarray(consumed_column, dtype=np.float64)
    dt = grid.slot_length
    if np.any(t < 0.0) or np.any(t > dt):
        raise ValueError(f"consumed time must lie in [0, {dt}], got {t}")
    p = t.shape[0]
    block = np.full((p, p), np.inf)
    np.fill_diagonal(block, dt - t)
    return block


def assemble(slot_blocks: list[np.ndarray], interslot_blocks: list[np.ndarray], grid: SlotGrid, max_periods: int = 2) -> SpaceTimeGraph:
    """Assemble the periodic space-time graph from its per-slot blocks.

    ``interslot_blocks[k]`` connects slot k+1 to k+2; the last block wraps
    slot n back to slot 1.
    """
    return SpaceTimeGraph(grid, list(slot_blocks), list(interslot_blocks), max_periods=max_periods)


def build_space_time_graph(
    fleet: list[TrajectoryParams],
    grid: SlotGrid,
    params: ChannelParams,
    sample_rule: str = "start",
    max_periods: int = 2,
) -> SpaceTimeGraph:
    """Sample the fleet on the slot grid and assemble the space-time graph."""
    table = sample_fleet(fleet, grid, sample_rule)
    n = grid.slot_count
    slot_blocks = [build_slot_matrix([row[k] for row in table], params) for k in range(n)]
    zeros = np.zeros(len(fleet))
    interslot_blocks = [build_interslot(zeros, grid) for _ in range(n)]
    return assemble(slot_blocks, interslot_blocks, grid, max_periods=max_periods)


def shortest_route(
    graph: _RoutableGraph,
    src: StNodeId,
    dst: StNodeId,
    volume: float,
    consumed: np.ndarray | None = None,
    unit_bit: bool = False,
) -> RouteResult:
    """Minimum-delay route carrying ``volume`` bits from src to dst.

    Per-bit edges contribute weight*volume seconds, cache edges their fixed
    remaining-idle-time weight. With ``unit_bit`` the path is chosen on the
    raw stored weights and the resulting sum is scaled by the volume, which
    reproduces the per-bit formulation exactly even across cache edges.
    Unreachable destinations give ``found=False`` rather than an exception.
    """
    if not volume > 0:
        raise ValueError(f"volume must be > 0, got {volume}")
    src_i = graph.node_index(src)
    dst_i = graph.node_index(dst)
    cache_w = graph.cache_weights(consumed)
    best_state, dist, parent = _routing.dijkstra_kernel(
        graph._indptr, graph._targets, graph._kinds, graph._perbit,
        graph._cache_node, graph._crosses,
        cache_w, float(volume), bool(unit_bit), src_i, dst_i, graph.max_periods,
    )
    if best_state < 0:
        return RouteResult.no_route(volume)
    n_nodes = graph.node_count
    states = []
    u = int(best_state)
    while u >= 0:
        states.append(u)
        u = int(parent[u])
    states.reverse()
    nodes = tuple((graph.label_of(s % n_nodes), s // n_nodes) for s in states)
    edges = []
    for a, b in zip(states, states[1:]):
        na, nb = a % n_nodes, b % n_nodes
        crossed = (b // n_nodes) != (a // n_nodes)
        e = _find_edge(graph, na, nb, crossed)
        kd = int(graph._kinds[e])
        if kd in (_routing.TX, _routing.STATE_IN):
            seconds = float(graph._perbit[e]) * volume
        elif kd in (_routing.CACHE, _routing.WRAP):
            seconds = float(cache_w[graph._cache_node[e]])
        else:
            seconds = 0.0
        edges.append(RouteEdge(graph.label_of(na), graph.label_of(nb), _routing.KIND_NAMES[kd], seconds))
    delay = float(dist[best_state])
    if unit_bit:
        delay *= volume
    return RouteResult(True, delay, volume, nodes, tuple(edges))


def _find_edge(graph: _RoutableGraph, src: int, dst: int, crossed: bool) -> int:
    for e in range(graph._indptr[src], graph._indptr[src + 1]):
        if graph._targets[e] == dst and bool(graph._crosses[e]) == crossed:
            return e
    raise RuntimeError(f"no edge between node indices {src} and {dst}")
