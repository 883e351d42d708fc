"""Compiled shortest-route search over the time-expanded graph.

The graph is stored CSR-style. Per-bit edges (transmission, state entry)
scale with the routed volume; cache edges are looked up per query from the
caller's consumed-time table, so one compiled structure serves every
schedule state. Period wrap edges move the search into the next period copy,
bounded by ``max_periods``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# edge kind codes (shared with stgraph/efsm)
TX = 0            # UAV -> UAV, same slot, seconds/bit
CACHE = 1         # UAV slot k -> k+1, fixed seconds
WRAP = 2          # UAV slot n -> 1, fixed seconds, crosses the period
STATE_IN = 3      # UAV -> own state node, seconds/bit
STATE_OUT = 4     # state node -> UAV, zero
STATE_SWITCH = 5  # state -> state on one UAV, zero
STATE_HOLD = 6    # state slot k -> k+1 (or n -> 1), zero

KIND_NAMES = ("tx", "cache", "wrap", "state_in", "state_out", "state_switch", "state_hold")


@njit(cache=True)
def _path_into(buf, parent, end):
    # Write the state sequence root..end into buf, return its length.
    n = 0
    u = end
    while u >= 0:
        buf[n] = u
        n += 1
        u = parent[u]
    for i in range(n // 2):
        t = buf[i]
        buf[i] = buf[n - 1 - i]
        buf[n - 1 - i] = t
    return n


@njit(cache=True)
def dijkstra_kernel(indptr, targets, kinds, perbit, cache_node, crosses,
                    cache_w, volume, unit_bit, src, dst, max_periods):
    """Label-setting search from src to the cheapest period copy of dst.

    Returns (best_state, dist, parent); best_state is -1 when dst is
    unreachable within the unrolled horizon. Equal-delay ties keep the
    lexicographically smallest state sequence.
    """
    n_nodes = indptr.shape[0] - 1
    n_states = n_nodes * max_periods
    dist = np.full(n_states, np.inf)
    parent = np.full(n_states, np.int64(-2))
    done = np.zeros(n_states, np.uint8)
    buf_a = np.empty(n_states, np.int64)
    buf_b = np.empty(n_states, np.int64)

    cap = indptr[n_nodes] * max_periods + 8
    hkey = np.empty(cap, np.float64)
    hseq = np.empty(cap, np.int64)
    hstate = np.empty(cap, np.int64)
    size = 0
    seq = 0

    dist[src] = 0.0
    parent[src] = -1
    hkey[0] = 0.0
    hseq[0] = 0
    hstate[0] = src
    size = 1
    seq = 1

    best_state = np.int64(-1)
    while size > 0:
        k0 = hkey[0]
        u = hstate[0]
        size -= 1
        if size > 0:
            kk = hkey[size]
            ss = hseq[size]
            uu = hstate[size]
            i = 0
            while True:
                left = 2 * i + 1
                right = left + 1
                m = i
                mk = kk
                ms = ss
                if left < size and (hkey[left] < mk or (hkey[left] == mk and hseq[left] < ms)):
                    m = left
                    mk = hkey[left]
                    ms = hseq[left]
                if right < size and (hkey[right] < mk or (hkey[right] == mk and hseq[right] < ms)):
                    m = right
                    mk = hkey[right]
                    ms = hseq[right]
                if m == i:
                    break
                hkey[i] = hkey[m]
                hseq[i] = hseq[m]
                hstate[i] = hstate[m]
                i = m
            hkey[i] = kk
            hseq[i] = ss
            hstate[i] = uu
        if done[u] or k0 > dist[u]:
            continue
        done[u] = 1
        node_u = u % n_nodes
        if node_u == dst:
            best_state = u
            break
        period_u = u // n_nodes
        for e in range(indptr[node_u], indptr[node_u + 1]):
            kd = kinds[e]
            if kd == TX or kd == STATE_IN:
                w = perbit[e] if unit_bit else perbit[e] * volume
            elif kd == CACHE or kd == WRAP:
                w = cache_w[cache_node[e]]
                if w < 0.0:
                    w = 0.0
            else:
                w = 0.0
            pv = period_u
            if crosses[e] != 0:
                pv += 1
                if pv >= max_periods:
                    continue
            v = pv * n_nodes + targets[e]
            if done[v]:
                continue
            nd = dist[u] + w
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                hkey[size] = nd
                hseq[size] = seq
                hstate[size] = v
                i = size
                size += 1
                seq += 1
                while i > 0:
                    pi = (i - 1) // 2
                    if hkey[pi] > hkey[i] or (hkey[pi] == hkey[i] and hseq[pi] > hseq[i]):
                        tk = hkey[pi]
                        ts = hseq[pi]
                        tn = hstate[pi]
                        hkey[pi] = hkey[i]
                        hseq[pi] = hseq[i]
                        hstate[pi] = hstate[i]
                        hkey[i] = tk
                        hseq[i] = ts
                        hstate[i] = tn
                        i = pi
                    else:
                        break
            elif nd == dist[v] and parent[v] != u:
                # tie: adopt u as predecessor only if it yields the
                # lexicographically smaller state sequence
                la = _path_into(buf_a, parent, u)
                lb = _path_into(buf_b, parent, parent[v])
                n_cmp = la if la < lb else lb
                take = False
                decided = False
                for i in range(n_cmp):
                    if buf_a[i] < buf_b[i]:
                        take = True
                        decided = True
                        break
                    if buf_a[i] > buf_b[i]:
                        decided = True
                        break
                if not decided and la < lb:
                    take = True
                if take:
                    parent[v] = u
    return best_state, dist, parent
