import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierpart.instance import KINDS, DistributionSpec, Instance, generate
from hierpart.routing import (
    CapacityError,
    PermSolverConfig,
    Router,
    g_cost,
    nearest_neighbor_tour,
    solve_tour,
)
from hierpart.solution import PartitionSolution, tour_cost

from oracles import brute_tour, held_karp


def big(n, seed, kind="uniform"):
    return generate(DistributionSpec(kind, seed, n, 10 * n))


def test_singleton():
    inst = Instance((0.0, 0.0), [[0.3, 0.4]], [1], 5)
    assert solve_tour([0], inst) == (0,)
    assert g_cost([0], inst) == pytest.approx(1.0, abs=1e-12)


def test_three_customers_match_permutations():
    inst = big(3, 5)
    pts = inst.customers.tolist()
    assert g_cost([0, 1, 2], inst) == pytest.approx(brute_tour(inst.depot, pts, [0, 1, 2]), abs=1e-12)


def test_exact_matches_subset_dp_oracle_at_twelve():
    inst = big(12, 11)
    got = g_cost(range(12), inst, PermSolverConfig(exact_threshold=13))
    want = held_karp(inst.depot, inst.customers.tolist(), range(12))
    assert got == pytest.approx(want, abs=1e-9)


def test_exact_matches_brute_force_up_to_eight():
    rng = np.random.default_rng(0)
    for seed in range(200):
        inst = big(10, seed, KINDS[seed % len(KINDS)])
        size = int(rng.integers(1, 9))
        nodes = sorted(rng.choice(10, size=size, replace=False).tolist())
        want = brute_tour(inst.depot, inst.customers.tolist(), nodes)
        assert g_cost(nodes, inst) == pytest.approx(want, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), size=st.integers(13, 60))
def test_heuristic_not_worse_than_nearest_neighbour(seed, size):
    inst = big(size, seed)
    nodes = list(range(size))
    heur = tour_cost(solve_tour(nodes, inst), inst)
    nn = tour_cost(nearest_neighbor_tour(nodes, inst), inst)
    assert heur <= nn + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), data=st.data())
def test_order_invariance(seed, data):
    inst = big(20, seed)
    nodes = data.draw(st.lists(st.integers(0, 19), min_size=1, max_size=20, unique=True))
    shuffled = data.draw(st.permutations(nodes))
    assert solve_tour(nodes, inst) == solve_tour(shuffled, inst)
    assert g_cost(nodes, inst) == g_cost(shuffled, inst)


def test_tour_is_a_permutation_of_subgraph():
    inst = big(40, 3)
    nodes = list(range(0, 40, 2))
    assert sorted(solve_tour(nodes, inst)) == nodes


def test_collinear_single_tour_beats_singletons():
    pts = [[0.1 * (i + 1), 0.0] for i in range(5)]
    inst = Instance((0.0, 0.0), pts, [1] * 5, 5)
    whole = g_cost(range(5), inst)
    assert whole == pytest.approx(1.0, abs=1e-12)
    assert whole <= sum(g_cost([i], inst) for i in range(5))


def test_determinism():
    inst = big(80, 9)
    a = solve_tour(range(80), inst)
    b = solve_tour(range(80), inst)
    assert a == b


def test_errors():
    inst = Instance((0.0, 0.0), [[0.1, 0.0], [0.2, 0.0]], [3, 3], 5)
    with pytest.raises(CapacityError):
        solve_tour([0, 1], inst)
    with pytest.raises(ValueError):
        solve_tour([], inst)
    with pytest.raises(IndexError):
        solve_tour([4], inst)
    with pytest.raises(ValueError):
        PermSolverConfig(exact_threshold=0)


def test_router_caches_and_sums():
    inst = big(12, 2)
    r = Router(inst)
    c = PartitionSolution([[0, 1, 2], [3, 4], list(range(5, 12))])
    assert r.f_cost(c) == pytest.approx(sum(g_cost(s, inst) for s in c.subgraphs), abs=1e-12)
    assert r.f_cost(c) == r.f_cost(PartitionSolution(list(reversed(c.subgraphs))))
    assert r.tour([2, 1, 0]) == solve_tour([0, 1, 2], inst)
    plan = r.plan(c)
    assert [sorted(t) for t in plan.tours] == [list(s) for s in c.subgraphs]


def test_singletons_cost_is_out_and_back():
    inst = big(6, 4)
    r = Router(inst)
    c = PartitionSolution([[i] for i in range(6)])
    assert r.f_cost(c) == pytest.approx(2 * inst.dist[0, 1:].sum(), abs=1e-12)
