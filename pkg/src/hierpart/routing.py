"""Single-route subsolver: exact subset DP for small subgraphs, local search above.

The routing cost of a subgraph (its ``g`` value) is the length of the tour
returned here. Up to ``exact_threshold`` customers the tour is optimal;
above it the tour comes from nearest-neighbour construction improved by
2-opt and Or-opt moves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numba
import numpy as np

from .instance import Instance
from .solution import PartitionSolution, RoutePlan, tour_cost

IMPROVE_EPS = 1e-12


@dataclass(frozen=True)
class PermSolverConfig:
    exact_threshold: int = 12
    two_opt_max_passes: int = 50
    or_opt_segment_lengths: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        if self.exact_threshold < 1:
            raise ValueError("exact_threshold must be >= 1")
        if self.two_opt_max_passes < 1:
            raise ValueError("two_opt_max_passes must be >= 1")
        object.__setattr__(self, "or_opt_segment_lengths", tuple(self.or_opt_segment_lengths))


class CapacityError(ValueError):
    pass


@numba.njit(cache=True)
def _held_karp(d):
    # d is (m+1, m+1) with the depot at 0; returns the visiting order of 1..m
    m = d.shape[0] - 1
    full = 1 << m
    inf = np.inf
    dp = np.full((full, m), inf)
    parent = np.full((full, m), -1, dtype=np.int32)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    for mask in range(1, full):
        for j in range(m):
            if not (mask >> j) & 1:
                continue
            cur = dp[mask, j]
            if cur == inf:
                continue
            for k in range(m):
                if (mask >> k) & 1:
                    continue
                nm = mask | (1 << k)
                val = cur + d[j + 1, k + 1]
                if val < dp[nm, k]:
                    dp[nm, k] = val
                    parent[nm, k] = j
    best = inf
    last = -1
    for j in range(m):
        val = dp[full - 1, j] + d[j + 1, 0]
        if val < best:
            best = val
            last = j
    order = np.empty(m, dtype=np.int64)
    mask = full - 1
    pos = m - 1
    while last >= 0:
        order[pos] = last + 1
        prev = parent[mask, last]
        mask ^= 1 << last
        last = prev
        pos -= 1
    return order


@numba.njit(cache=True)
def _nearest_neighbor(d):
    m = d.shape[0] - 1
    used = np.zeros(m + 1, dtype=np.bool_)
    order = np.empty(m, dtype=np.int64)
    cur = 0
    for pos in range(m):
        best = np.inf
        nxt = -1
        for k in range(1, m + 1):
            # strict < keeps the lowest index on ties
            if not used[k] and d[cur, k] < best:
                best = d[cur, k]
                nxt = k
        used[nxt] = True
        order[pos] = nxt
        cur = nxt
    return order


@numba.njit(cache=True)
def _two_opt_pass(s, d):
    # s = [0, tour..., 0]; reverses s[i..j] on improvement
    n = s.shape[0]
    improved = False
    for i in range(1, n - 2):
        for j in range(i + 1, n - 1):
            delta = (d[s[i - 1], s[j]] + d[s[i], s[j + 1]]
                     - d[s[i - 1], s[i]] - d[s[j], s[j + 1]])
            if delta < -1e-12:
                lo = i
                hi = j
                while lo < hi:
                    t = s[lo]
                    s[lo] = s[hi]
                    s[hi] = t
                    lo += 1
                    hi -= 1
                improved = True
    return improved


@numba.njit(cache=True)
def _or_opt_pass(s, d, seg_lens):
    n = s.shape[0]
    improved = False
    buf = np.empty(n, dtype=s.dtype)
    for li in range(seg_lens.shape[0]):
        L = seg_lens[li]
        i = 1
        while i + L - 1 <= n - 2:
            e = i + L - 1
            p = s[i - 1]
            q = s[e + 1]
            removal = d[p, s[i]] + d[s[e], q] - d[p, q]
            best = -1e-12
            best_a = -1
            best_rev = False
            for a in range(0, n - 1):
                if a >= i - 1 and a <= e:
                    continue
                u = s[a]
                v = s[a + 1]
                fwd = d[u, s[i]] + d[s[e], v] - d[u, v] - removal
                if fwd < best:
                    best = fwd
                    best_a = a
                    best_rev = False
                rev = d[u, s[e]] + d[s[i], v] - d[u, v] - removal
                if rev < best:
                    best = rev
                    best_a = a
                    best_rev = True
            if best_a >= 0:
                k = 0
                for t in range(n):
                    if t >= i and t <= e:
                        continue
                    buf[k] = s[t]
                    k += 1
                    if t == best_a:
                        if best_rev:
                            for r in range(e, i - 1, -1):
                                buf[k] = s[r]
                                k += 1
                        else:
                            for r in range(i, e + 1):
                                buf[k] = s[r]
                                k += 1
                for t in range(n):
                    s[t] = buf[t]
                improved = True
            else:
                i += 1
    return improved


@numba.njit(cache=True)
def _local_search(order, d, max_passes, seg_lens):
    m = order.shape[0]
    s = np.zeros(m + 2, dtype=np.int64)
    s[1:m + 1] = order
    for _ in range(max_passes):
        improved = _two_opt_pass(s, d)
        if _or_opt_pass(s, d, seg_lens):
            improved = True
        if not improved:
            break
    return s[1:m + 1].copy()


def _local_matrix(nodes: np.ndarray, inst: Instance) -> np.ndarray:
    idx = np.concatenate(([0], nodes + 1))
    return np.ascontiguousarray(inst.dist[np.ix_(idx, idx)])


def solve_tour(
    subgraph: Iterable[int], inst: Instance, cfg: PermSolverConfig | None = None
) -> tuple[int, ...]:
    """Best tour found for ``subgraph`` (customer indices), depot implicit at both ends."""
    cfg = cfg or PermSolverConfig()
    nodes = np.array(sorted(int(v) for v in subgraph), dtype=np.int64)
    if len(nodes) == 0:
        raise ValueError("cannot route an empty subgraph")
    if len(set(nodes.tolist())) != len(nodes):
        raise ValueError("subgraph has repeated customers")
    if nodes[0] < 0 or nodes[-1] >= inst.n:
        raise IndexError("customer index out of range")
    demand = int(inst.demands[nodes].sum())
    if demand > inst.capacity:
        raise CapacityError(f"subgraph demand {demand} exceeds capacity {inst.capacity}")
    m = len(nodes)
    if m <= 2:
        return tuple(int(v) for v in nodes)
    d = _local_matrix(nodes, inst)
    if m <= cfg.exact_threshold:
        order = _held_karp(d)
    else:
        order = _nearest_neighbor(d)
        order = _local_search(
            order, d, cfg.two_opt_max_passes,
            np.array(cfg.or_opt_segment_lengths, dtype=np.int64),
        )
    return tuple(int(nodes[k - 1]) for k in order)


def nearest_neighbor_tour(subgraph: Iterable[int], inst: Instance) -> tuple[int, ...]:
    """The construction step of the heuristic path, without improvement."""
    nodes = np.array(sorted(int(v) for v in subgraph), dtype=np.int64)
    order = _nearest_neighbor(_local_matrix(nodes, inst))
    return tuple(int(nodes[k - 1]) for k in order)


def g_cost(subgraph: Iterable[int], inst: Instance, cfg: PermSolverConfig | None = None) -> float:
    """Routed cost of one subgraph. Exact when it has at most ``exact_threshold`` customers."""
    return tour_cost(solve_tour(subgraph, inst, cfg), inst)


class Router:
    """Memoised subsolver bound to one instance.

    Subgraphs recur constantly during refinement and training; this caches
    ``(tour, cost)`` by the sorted customer tuple.
    """

    def __init__(self, inst: Instance, cfg: PermSolverConfig | None = None):
        self.inst = inst
        self.cfg = cfg or PermSolverConfig()
        self._cache: dict[tuple[int, ...], tuple[tuple[int, ...], float]] = {}

    def _entry(self, subgraph: Iterable[int]) -> tuple[tuple[int, ...], float]:
        key = tuple(sorted(subgraph))
        hit = self._cache.get(key)
        if hit is None:
            tour = solve_tour(key, self.inst, self.cfg)
            hit = (tour, tour_cost(tour, self.inst))
            self._cache[key] = hit
        return hit

    def tour(self, subgraph: Iterable[int]) -> tuple[int, ...]:
        return self._entry(subgraph)[0]

    def cost(self, subgraph: Iterable[int]) -> float:
        return self._entry(subgraph)[1]

    def f_cost(self, c: PartitionSolution | Iterable[Iterable[int]]) -> float:
        subs = c.subgraphs if isinstance(c, PartitionSolution) else c
        return float(sum(self.cost(s) for s in subs))

    def plan(self, c: PartitionSolution) -> RoutePlan:
        return RoutePlan([self.tour(s) for s in c.subgraphs])


def route_partition(
    c: PartitionSolution, inst: Instance, cfg: PermSolverConfig | None = None
) -> RoutePlan:
    """Route every subgraph independently (tour i serves subgraph i)."""
    return RoutePlan([solve_tour(s, inst, cfg) for s in c.subgraphs])
