import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierpart import hierarchy
from hierpart.hierarchy import (
    SolveOptions,
    build_subproblems,
    centroid_angle,
    dump_traces,
    f_cost,
    global_partition,
    order_by_polar,
    pair_positions,
    refine,
    refine_level,
    solve,
)
from hierpart.instance import DistributionSpec, Instance, generate
from hierpart.policy import EdgeScorePolicy, default_policy
from hierpart.routing import PermSolverConfig, Router, g_cost
from hierpart.solution import PartitionSolution, plan_cost, validate_partition

from oracles import shift_and_pair


def polar_instance(angles_deg, radius=0.3, demand=1, capacity=10):
    ang = np.radians(angles_deg)
    pts = 0.5 + radius * np.c_[np.cos(ang), np.sin(ang)]
    return Instance((0.5, 0.5), pts, [demand] * len(angles_deg), capacity)


# -- ordering and pairing ------------------------------------------------------------------


def test_order_by_polar_example():
    inst = polar_instance([200, 10, 100])
    c = PartitionSolution([[0], [1], [2]])
    assert order_by_polar(c, inst).subgraphs == ((1,), (2,), (0,))


def test_order_single_subgraph():
    inst = polar_instance([200, 10, 100])
    c = PartitionSolution([[0, 1, 2]])
    assert order_by_polar(c, inst) == c


def test_centroid_at_depot_goes_first():
    pts = [[0.75, 0.5], [0.25, 0.5], [0.5, 0.75], [0.75, 0.75]]
    inst = Instance((0.5, 0.5), pts, [1, 1, 1, 1], 10)
    c = PartitionSolution([[2], [0, 1], [3]])
    assert math.isnan(centroid_angle((0, 1), inst))
    assert order_by_polar(c, inst).subgraphs == ((0, 1), (3,), (2,))


def test_pairing_examples():
    assert pair_positions(4, 1) == [(0, 1), (2, 3)]
    assert pair_positions(4, 2) == [(1, 2), (3, 0)]
    for k in range(1, 8):
        pairs = pair_positions(5, k)
        assert len(pairs) == 2
        assert len({v for p in pairs for v in p}) == 4
    assert {frozenset(p) for p in pair_positions(2, 3)} == {frozenset((0, 1))}
    assert pair_positions(1, 1) == []
    with pytest.raises(ValueError):
        pair_positions(4, 0)


@given(n_c=st.integers(2, 12), k=st.integers(1, 12))
def test_pairing_matches_shift_and_pair(n_c, k):
    assert pair_positions(n_c, k) == shift_and_pair(n_c, k)


@given(n_c=st.integers(2, 12).filter(lambda v: v % 2 == 0))
def test_every_adjacent_pair_is_visited(n_c):
    seen = set()
    for k in range(1, n_c + 1):
        seen |= {frozenset(p) for p in pair_positions(n_c, k)}
    assert all(frozenset((i, (i + 1) % n_c)) in seen for i in range(n_c))


def test_build_subproblems():
    c = PartitionSolution([[0, 1], [2, 3], [4, 5], [6, 7, 8]])
    subs = build_subproblems(c, 2, 20)
    assert [pq for _, pq in subs] == [(1, 2), (3, 0)]
    sp, _ = subs[1]
    assert sp.nodes == (0, 1, 6, 7, 8)
    assert sp.max_returns == 2 and sp.capacity == 20


# -- refinement ----------------------------------------------------------------------------


def test_fixed_point_policy(monkeypatch):
    inst = generate(DistributionSpec("uniform", 3, 30, 20))
    r = Router(inst)
    c = order_by_polar(global_partition(inst, default_policy(), router=r), inst)
    lookup = {}
    for i in range(len(c)):
        for j in range(len(c)):
            if i != j:
                lookup[tuple(sorted(c[i] + c[j]))] = [c[i], c[j]]
    monkeypatch.setattr(hierarchy, "local_decode",
                        lambda pol, inst_, sp, *a, **k: lookup[sp.nodes])
    for accept in ("always", "if_better"):
        out, traces = refine_level(c, 1, default_policy(), inst, router=r, accept=accept)
        assert out == c
        assert all(t.delta == 0 for t in traces)


def test_collinear_rebalancing():
    pts = [[0.1 * (i + 1), 0.0] for i in range(4)]
    inst = Instance((0.0, 0.0), pts, [1, 1, 1, 1], 2)
    c = PartitionSolution([[0, 3], [1, 2]])
    before = g_cost([0, 3], inst) + g_cost([1, 2], inst)
    out, traces = refine_level(c, 1, default_policy(), inst, mode="beam", beam_width=16)
    after = f_cost(out, inst)
    assert after < before
    assert after == pytest.approx(1.2, abs=1e-12)
    assert sorted(out.subgraphs) == [(0, 1), (2, 3)]
    assert traces[0].delta == pytest.approx(after - before, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), accept=st.sampled_from(["always", "if_better"]),
       mode=st.sampled_from(["greedy", "sample"]))
def test_trace_deltas_sum_to_cost_change(seed, accept, mode):
    inst = generate(DistributionSpec("uniform", seed, 40, 30))
    r = Router(inst)
    rng = np.random.default_rng(seed)
    c = order_by_polar(global_partition(inst, default_policy(), router=r), inst)
    pol = EdgeScorePolicy(rng.normal(0, 3, 8))
    for k in range(1, 6):
        new, traces = refine_level(c, k, pol, inst, router=r, mode=mode, accept=accept, rng=rng)
        assert validate_partition(new, inst).ok
        want = f_cost(new, inst) - f_cost(c, inst)
        assert abs(math.fsum(t.delta for t in traces) - want) <= 1e-9
        if accept == "if_better":
            assert f_cost(new, inst) <= f_cost(c, inst) + 1e-9
        c = order_by_polar(new, inst)


def test_refine_costs_non_increasing():
    inst = generate(DistributionSpec("gaussian", 1, 60, 40))
    r = Router(inst)
    c0 = global_partition(inst, default_policy(), router=r)
    _, traces, costs = refine(c0, inst, default_policy(), 5, SolveOptions(mode="beam", beam_width=4), r)
    assert len(costs) == 6
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))


def test_adaptive_stops_at_fixed_point():
    inst = generate(DistributionSpec("uniform", 2, 30, 40))
    r = Router(inst)
    c0 = global_partition(inst, default_policy(), router=r)
    _, _, costs = refine(c0, inst, default_policy(), 50, SolveOptions(adaptive=True), r)
    assert len(costs) < 51


def test_accept_rule_validation():
    inst = generate(DistributionSpec("uniform", 0, 10, 10))
    c = global_partition(inst, default_policy())
    with pytest.raises(ValueError):
        refine_level(c, 1, default_policy(), inst, accept="maybe")


# -- global partition and solve ------------------------------------------------------------


@pytest.mark.parametrize("restart", [False, True])
def test_single_subgraph_instance(restart):
    inst = generate(DistributionSpec("uniform", 0, 6, 100))
    # zero weights break ties towards customers, so the route is never cut early
    c = global_partition(inst, EdgeScorePolicy.zeros(), use_subproblem_restart=restart)
    assert len(c) == 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), mode=st.sampled_from(["greedy", "sample", "beam"]))
def test_restart_covers_every_customer(seed, mode):
    inst = generate(DistributionSpec("uniform", seed, 50, 30))
    c = global_partition(inst, default_policy(), mode, True, beam_width=4,
                         rng=np.random.default_rng(seed))
    assert validate_partition(c, inst).ok
    assert sorted(v for s in c.subgraphs for v in s) == list(range(50))


def test_restart_not_worse_on_small_instances():
    pol = EdgeScorePolicy.zeros()
    wins = 0
    for seed in range(100):
        inst = generate(DistributionSpec("uniform", seed, 6, 10))
        r = Router(inst)
        a = plan_cost(r.plan(global_partition(inst, pol, "greedy", True, router=r)), inst)
        b = plan_cost(r.plan(global_partition(inst, pol, "greedy", False, router=r)), inst)
        wins += a <= b
    assert wins >= 50


def test_solve_k0_has_no_traces():
    inst = generate(DistributionSpec("uniform", 0, 40, 30))
    res = solve(inst, default_policy(), default_policy(), 0)
    assert res.traces == [] and len(res.level_costs) == 1
    assert plan_cost(res.plan, inst) == pytest.approx(res.cost, abs=1e-9)


def test_solve_non_increasing_in_k():
    inst = generate(DistributionSpec("uniform", 5, 60, 40))
    costs = [solve(inst, default_policy(), default_policy(), K).cost for K in range(6)]
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))


def test_solve_with_exact_subsolver():
    inst = generate(DistributionSpec("uniform", 4, 8, 15))
    res = solve(inst, default_policy(), default_policy(), 3, PermSolverConfig(exact_threshold=12),
                SolveOptions(mode="beam"))
    assert validate_partition(res.partition, inst).ok
    with pytest.raises(ValueError):
        solve(inst, default_policy(), default_policy(), -1)


def test_dump_traces(tmp_path):
    inst = generate(DistributionSpec("uniform", 7, 50, 30))
    res = solve(inst, default_policy(), default_policy(), 3)
    dump_traces(res.traces, tmp_path / "t.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert len(rows) == len(res.traces)
    assert set(rows[0]) == {"level", "pair_index", "before", "after", "delta"}
    assert sum(r["delta"] for r in rows) == pytest.approx(res.level_costs[-1] - res.level_costs[0], abs=1e-9)


def test_beam_restart_never_worse_than_single_beam():
    pol = EdgeScorePolicy(np.random.default_rng(0).normal(0, 3, 8))
    for seed in range(10):
        inst = generate(DistributionSpec("gaussian", seed, 40, 30))
        r = Router(inst)
        single = r.f_cost(global_partition(inst, pol, "beam", False, beam_width=4, router=r))
        restart = r.f_cost(global_partition(inst, pol, "beam", True, beam_width=4, router=r))
        assert restart <= single + 1e-9
