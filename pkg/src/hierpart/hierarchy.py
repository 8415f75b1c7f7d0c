"""Global partition followed by levels of pairwise local repartitioning.

A solve runs four stages:

1. a global policy partitions the whole instance;
2. the subgraphs are ordered by the polar angle of their centroids, which
   makes cyclically adjacent subgraphs neighbours;
3. each level ``k`` pairs up neighbours (with a shift of ``k - 1`` positions
   so successive levels see different pairs) and a local policy re-splits
   the union of every pair into two new subgraphs;
4. every final subgraph is routed by the permutation subsolver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .instance import Instance, Subproblem
from .policy import DecodeContext, EdgeScorePolicy, PolicyError, decode
from .routing import PermSolverConfig, Router
from .solution import PartitionSolution, RoutePlan

Accept = Literal["always", "if_better"]
Mode = Literal["greedy", "sample", "beam"]


def centroid(sub: Iterable[int], inst: Instance) -> np.ndarray:
    return inst.customers[list(sub)].mean(axis=0)


def centroid_angle(sub: Iterable[int], inst: Instance) -> float:
    """Polar angle of the centroid about the depot in ``[0, 2*pi)``; NaN if they coincide."""
    rel = centroid(sub, inst) - np.asarray(inst.depot)
    if rel[0] == 0.0 and rel[1] == 0.0:
        return math.nan
    return math.atan2(rel[1], rel[0]) % (2 * math.pi)


def order_by_polar(c: PartitionSolution, inst: Instance) -> PartitionSolution:
    """Sort subgraphs by centroid angle. A centroid on the depot sorts first;
    ties keep the incoming order."""
    def key(i: int):
        a = centroid_angle(c.subgraphs[i], inst)
        return (-1.0 if math.isnan(a) else a, i)

    return PartitionSolution([c.subgraphs[i] for i in sorted(range(len(c)), key=key)])


def pair_positions(n_c: int, k: int) -> list[tuple[int, int]]:
    """0-based subgraph positions paired at level ``k``.

    Pair ``j`` (1-based) joins positions ``(m+k-1) % n_c + 1`` and
    ``(m+k) % n_c + 1`` (1-based) with ``m = 2(j-1)``.
    """
    if k < 1:
        raise ValueError("levels start at 1")
    if n_c < 2:
        return []
    out = []
    for j in range(1, n_c // 2 + 1):
        m = 2 * (j - 1)
        out.append(((m + k - 1) % n_c, (m + k) % n_c))
    return out


def build_subproblems(
    c: PartitionSolution, k: int, capacity: int
) -> list[tuple[Subproblem, tuple[int, int]]]:
    """Two-route subproblems for level ``k``, with the positions they replace."""
    out = []
    for p, q in pair_positions(len(c), k):
        nodes = c.subgraphs[p] + c.subgraphs[q]
        out.append((Subproblem(nodes, capacity, max_returns=2, min_routes=2), (p, q)))
    return out


@dataclass
class LevelTrace:
    level: int
    pair_index: int
    before: tuple[tuple[int, ...], tuple[int, ...]]
    after: tuple[tuple[int, ...], tuple[int, ...]]
    delta: float

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "pair_index": self.pair_index,
            "before": [list(s) for s in self.before],
            "after": [list(s) for s in self.after],
            "delta": self.delta,
        }


def _angdist(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return 0.0
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def _place(new: list[tuple[int, ...]], old: tuple[tuple[int, ...], tuple[int, ...]],
           inst: Instance) -> tuple[tuple[int, ...], tuple[int, ...]]:
    # keep the new pair in the slots whose old occupants they most resemble
    a, b = new
    ta, tb = centroid_angle(a, inst), centroid_angle(b, inst)
    t1, t2 = centroid_angle(old[0], inst), centroid_angle(old[1], inst)
    same = _angdist(ta, t1) + _angdist(tb, t2)
    swap = _angdist(tb, t1) + _angdist(ta, t2)
    return (b, a) if swap < same else (a, b)


def local_decode(
    policy: EdgeScorePolicy,
    inst: Instance,
    sub: Subproblem,
    mode: Mode = "greedy",
    *,
    beam_width: int = 16,
    rng: np.random.Generator | None = None,
    router: Router | None = None,
) -> list[tuple[int, ...]]:
    res = decode(policy, inst, sub, mode, beam_width=beam_width, rng=rng, router=router)
    subs = list(res.partition.subgraphs)
    if len(subs) != 2:
        raise PolicyError(f"local decode produced {len(subs)} subgraphs, expected 2")
    return subs


def refine_level(
    c_prev: PartitionSolution,
    k: int,
    local_policy: EdgeScorePolicy,
    inst: Instance,
    *,
    router: Router | None = None,
    mode: Mode = "greedy",
    beam_width: int = 16,
    accept: Accept = "if_better",
    rng: np.random.Generator | None = None,
) -> tuple[PartitionSolution, list[LevelTrace]]:
    """One level of pairwise repartitioning.

    Every trace's ``delta`` is the change in summed routed cost of its pair,
    so the deltas of a level add up to the change in total partition cost.
    """
    if accept not in ("always", "if_better"):
        raise ValueError(f"unknown accept rule {accept!r}")
    router = router or Router(inst)
    subs = list(c_prev.subgraphs)
    traces = []
    for j, (sp, (p, q)) in enumerate(build_subproblems(c_prev, k, inst.capacity)):
        old = (subs[p], subs[q])
        new = _place(local_decode(local_policy, inst, sp, mode, beam_width=beam_width,
                                  rng=rng, router=router), old, inst)
        before = router.cost(old[0]) + router.cost(old[1])
        after = router.cost(new[0]) + router.cost(new[1])
        delta = after - before
        if accept == "if_better" and not delta < 0:
            new, delta = old, 0.0
        subs[p], subs[q] = new
        traces.append(LevelTrace(k, j + 1, old, new, delta))
    return PartitionSolution(subs), traces


def global_partition(
    inst: Instance,
    policy: EdgeScorePolicy,
    mode: Mode = "greedy",
    use_subproblem_restart: bool = False,
    *,
    beam_width: int = 16,
    rng: np.random.Generator | None = None,
    router: Router | None = None,
) -> PartitionSolution:
    """Partition the whole instance.

    With restart, only the first subgraph of each decode is kept; the
    remaining customers become a fresh subproblem with one route fewer and
    are decoded again, until every customer is assigned. In beam mode the
    rest of the best decode so far is kept as an incumbent and replaces a
    re-decode that is not cheaper, so restart never loses to a single beam.
    """
    if not use_subproblem_restart:
        return decode(policy, inst, None, mode, beam_width=beam_width, rng=rng, router=router).partition
    router = router or Router(inst)
    remaining = list(range(inst.n))
    budget = inst.n_max
    out: list[tuple[int, ...]] = []
    incumbent: list[tuple[int, ...]] = []
    while remaining:
        ctx = DecodeContext(inst, Subproblem(remaining, inst.capacity, budget))
        if mode == "beam":
            subs = list(decode(policy, inst, ctx, "beam", beam_width=beam_width, router=router).partition)
            if incumbent and sum(map(router.cost, incumbent)) <= sum(map(router.cost, subs)):
                subs = incumbent
            first, incumbent = subs[0], subs[1:]
        else:
            res = decode(policy, inst, ctx, mode, rng=rng, stop_after_first=True)
            first = res.partition[0]
        out.append(first)
        taken = set(first)
        remaining = [v for v in remaining if v not in taken]
        budget -= 1
    return PartitionSolution(out)


@dataclass
class SolveOptions:
    mode: Mode = "greedy"
    beam_width: int = 16
    accept: Accept = "if_better"
    restart: bool = False
    reorder: bool = True
    adaptive: bool = False
    seed: int = 0
    local_mode: Mode | None = None


@dataclass
class SolveResult:
    plan: RoutePlan
    partition: PartitionSolution
    traces: list[LevelTrace]
    level_costs: list[float] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return self.level_costs[-1]


def f_cost(c: PartitionSolution, inst: Instance, perm_cfg: PermSolverConfig | None = None,
           router: Router | None = None) -> float:
    """Total routed cost of a partition (sum of per-subgraph tour costs)."""
    router = router or Router(inst, perm_cfg)
    return router.f_cost(c)


def refine(
    c: PartitionSolution,
    inst: Instance,
    local_policy: EdgeScorePolicy,
    K: int,
    opts: SolveOptions,
    router: Router,
    rng: np.random.Generator | None = None,
) -> tuple[PartitionSolution, list[LevelTrace], list[float]]:
    """Polar ordering plus ``K`` refinement levels; returns per-level costs ``f(C^(0..K))``."""
    c = order_by_polar(c, inst)
    costs = [router.f_cost(c)]
    traces: list[LevelTrace] = []
    for k in range(1, K + 1):
        c, tr = refine_level(c, k, local_policy, inst, router=router,
                             mode=opts.local_mode or opts.mode, beam_width=opts.beam_width,
                             accept=opts.accept, rng=rng)
        traces.extend(tr)
        if opts.reorder:
            c = order_by_polar(c, inst)
        costs.append(router.f_cost(c))
        if opts.adaptive and all(t.delta == 0 for t in tr):
            break
    return c, traces, costs


def solve(
    inst: Instance,
    global_policy: EdgeScorePolicy,
    local_policy: EdgeScorePolicy,
    K: int = 0,
    perm_cfg: PermSolverConfig | None = None,
    options: SolveOptions | None = None,
    router: Router | None = None,
) -> SolveResult:
    """Global partition, ``K`` refinement levels, then per-subgraph routing."""
    if K < 0:
        raise ValueError("K must be >= 0")
    opts = options or SolveOptions()
    router = router or Router(inst, perm_cfg)
    rng = np.random.default_rng(opts.seed) if opts.mode == "sample" else None
    c0 = global_partition(inst, global_policy, opts.mode, opts.restart,
                          beam_width=opts.beam_width, rng=rng, router=router)
    c, traces, costs = refine(c0, inst, local_policy, K, opts, router, rng)
    return SolveResult(router.plan(c), c, traces, costs)


def dump_traces(traces: Iterable[LevelTrace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_dict()) + "\n")
