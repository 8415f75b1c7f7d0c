import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierpart.instance import DistributionSpec, Instance, generate
from hierpart.routing import PermSolverConfig, route_partition
from hierpart.solution import (
    PartitionSolution,
    RoutePlan,
    SolutionFormatError,
    load_partition,
    load_plan,
    partition_of_plan,
    plan_cost,
    save_partition,
    save_plan,
    tour_cost,
    validate_partition,
    validate_plan,
)

from oracles import optimal_cost_by_plans, set_partitions


def line(points, demands=None, capacity=10):
    demands = demands or [1] * len(points)
    return Instance((0.0, 0.0), points, demands, capacity)


def test_tour_cost_out_and_back():
    assert tour_cost([0], line([[1.0, 0.0]])) == 2.0


def test_tour_cost_triangle():
    inst = line([[1.0, 0.0], [0.0, 1.0]])
    assert tour_cost([0, 1], inst) == pytest.approx(2 + math.sqrt(2), abs=1e-8)


def test_empty_tour():
    assert tour_cost([], line([[1.0, 0.0]])) == 0.0


def test_tour_cost_bad_index():
    with pytest.raises(IndexError):
        tour_cost([3], line([[1.0, 0.0]]))


def test_plan_cost_additive():
    inst = line([[1.0, 0.0], [0.0, 1.0]])
    assert plan_cost(RoutePlan([[0], [1]]), inst) == 4.0
    assert plan_cost(RoutePlan([[0, 1]]), inst) == tour_cost([0, 1], inst)


@pytest.mark.parametrize("seed", range(5))
def test_best_partition_cost_matches_plan_enumeration(seed):
    inst = generate(DistributionSpec("uniform", seed, 5, 15))
    d = inst.demands.tolist()
    best = math.inf
    for part in set_partitions(range(5)):
        if len(part) <= inst.n_max and all(sum(d[v] for v in b) <= 15 for b in part):
            plan = route_partition(PartitionSolution(part), inst)
            assert validate_plan(plan, inst).ok
            best = min(best, plan_cost(plan, inst))
    want = optimal_cost_by_plans(inst.depot, inst.customers.tolist(), d, 15, inst.n_max)
    assert best == pytest.approx(want, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), data=st.data())
def test_plan_cost_symmetries(seed, data):
    inst = generate(DistributionSpec("uniform", seed, 9, 20))
    perm = data.draw(st.permutations(range(9)))
    cuts = sorted(data.draw(st.sets(st.integers(1, 8), max_size=4)))
    tours = [list(perm[a:b]) for a, b in zip([0] + cuts, cuts + [9])]
    plan = RoutePlan(tours)
    base = plan_cost(plan, inst)
    shuffled = RoutePlan(data.draw(st.permutations(tours)))
    assert plan_cost(shuffled, inst) == pytest.approx(base, abs=1e-12)
    i = data.draw(st.integers(0, len(tours) - 1))
    flipped = RoutePlan([t[::-1] if j == i else t for j, t in enumerate(tours)])
    assert plan_cost(flipped, inst) == pytest.approx(base, abs=1e-12)


def two_customers(capacity=5):
    return line([[1.0, 0.0], [0.0, 1.0]], [2, 3], capacity)


def test_validate_feasible():
    assert validate_partition(PartitionSolution([[0], [1]]), two_customers()).ok


def test_validate_disjointness():
    rep = validate_partition(PartitionSolution([[0], [0, 1]]), two_customers())
    assert not rep.ok
    assert any(v.startswith("disjointness") for v in rep.violations)


def test_validate_capacity():
    inst = line([[1.0, 0.0], [0.0, 1.0]], [3, 3], 5)
    rep = validate_partition(PartitionSolution([[0, 1]]), inst)
    assert [v.split(":")[0] for v in rep.violations] == ["capacity"]


def test_validate_coverage():
    rep = validate_partition(PartitionSolution([[0]]), two_customers())
    assert [v.split(":")[0] for v in rep.violations] == ["coverage"]


def test_validate_count():
    inst = line([[1, 0], [0, 1], [1, 1]], [1, 1, 1], 3)
    assert inst.n_max == 2
    rep = validate_partition(PartitionSolution([[0], [1], [2]]), inst)
    assert [v.split(":")[0] for v in rep.violations] == ["count"]


def test_validate_out_of_range():
    rep = validate_partition(PartitionSolution([[0, 1, 7]]), two_customers(10))
    assert not rep.ok


def test_empty_subgraph_rejected():
    with pytest.raises(ValueError):
        PartitionSolution([[0], []])


def test_validate_plan_repeated_customer():
    rep = validate_plan(RoutePlan([[0, 0, 1]]), two_customers(10))
    assert any("repeated" in v for v in rep.violations)


def test_partition_of_plan():
    plan = RoutePlan([[4, 2], [3]])
    assert partition_of_plan(plan).subgraphs == ((2, 4), (3,))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_exact_rerouting_never_worse(seed):
    inst = generate(DistributionSpec("uniform", seed, 10, 25))
    rng = np.random.default_rng(seed)
    order = rng.permutation(10).tolist()
    tours, cur, load = [], [], 0
    for v in order:
        if load + inst.demands[v] > 25:
            tours.append(cur)
            cur, load = [], 0
        cur.append(v)
        load += int(inst.demands[v])
    tours.append(cur)
    plan = RoutePlan(tours)
    if not validate_plan(plan, inst).ok:
        return
    assert validate_partition(partition_of_plan(plan), inst).ok
    rerouted = route_partition(partition_of_plan(plan), inst, PermSolverConfig(exact_threshold=12))
    assert plan_cost(rerouted, inst) <= plan_cost(plan, inst) + 1e-12


def test_files_round_trip(tmp_path):
    plan = RoutePlan([[1, 0], [2]])
    save_plan(plan, tmp_path / "p.json")
    assert load_plan(tmp_path / "p.json") == plan
    part = PartitionSolution([[2, 0], [1]])
    save_partition(part, tmp_path / "c.json")
    assert load_partition(tmp_path / "c.json") == part
    (tmp_path / "bad.json").write_text('{"tours": [[1, "a"]]}')
    with pytest.raises(SolutionFormatError):
        load_plan(tmp_path / "bad.json")
