import json

import numpy as np
import pytest

from hierpart.hierarchy import SolveOptions, global_partition, refine
from hierpart.instance import DistributionSpec, Subproblem, generate
from hierpart.policy import DEPOT, FEATURES, EdgeScorePolicy, decode, default_policy, sequence_logp
from hierpart.routing import Router
from hierpart.sl import (
    LabeledStep,
    SlConfig,
    generate_label,
    label_actions,
    sl_loss_grad,
    sl_step,
    steps_from_label,
    train_sl,
)
from hierpart.solution import PartitionSolution, validate_partition


def random_theta(seed):
    return np.random.default_rng(seed).normal(0, 2, len(FEATURES))


def some_steps(seed=0, n=30):
    inst = generate(DistributionSpec("uniform", seed, n, 20))
    label = decode(default_policy(), inst, mode="greedy").partition
    return steps_from_label(inst, label)


def test_label_with_beam_one_and_no_levels_is_greedy():
    for seed in range(5):
        inst = generate(DistributionSpec("uniform", seed, 30, 20))
        pol = EdgeScorePolicy(random_theta(seed))
        label = generate_label(inst, pol, pol, beam_size=1, K_label=0)
        want = decode(pol, inst, mode="greedy").partition
        assert sorted(label.subgraphs) == sorted(want.subgraphs)


def test_label_never_worse_than_greedy_pipeline():
    g, l = default_policy(), EdgeScorePolicy(random_theta(1))
    for seed in range(100):
        inst = generate(DistributionSpec("uniform", seed, 20, 30))
        r = Router(inst)
        label = generate_label(inst, g, l, beam_size=4, K_label=2, router=r)
        assert validate_partition(label, inst).ok
        c0 = global_partition(inst, g, "greedy", router=r)
        _, _, costs = refine(c0, inst, l, 2, SolveOptions(), r)
        assert r.f_cost(label) <= costs[-1] + 1e-12


def test_single_subgraph_label():
    inst = generate(DistributionSpec("uniform", 0, 7, 100))
    label = PartitionSolution([list(range(7))])
    glob, loc = steps_from_label(inst, label)
    assert len(glob) == 7 and loc == []


def test_three_subgraph_label_has_three_local_pairs():
    inst = generate(DistributionSpec("uniform", 0, 9, 15))
    label = PartitionSolution([[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    if not validate_partition(label, inst).ok:
        pytest.skip("demands do not fit")
    glob, loc = steps_from_label(inst, label)
    assert len(glob) == 9 + 2
    # each pair replays both subgraphs plus one depot return
    assert len(loc) == 3 * (6 + 1)
    assert len({s.subproblem.nodes for s in loc}) == 3


def test_targets_are_feasible_and_serialised_in_tour_order():
    inst = generate(DistributionSpec("gaussian", 3, 40, 30))
    r = Router(inst)
    label = decode(default_policy(), inst, mode="beam", beam_width=4, router=r).partition
    acts = label_actions(label, r)
    assert acts.count(DEPOT) == len(label) - 1
    assert acts[:len(label[0])] == list(r.tour(label[0]))
    glob, loc = steps_from_label(inst, label, r)
    assert [s.target_action for s in glob] == acts
    for s in glob + loc:
        is_depot = s.features[s.target_index, FEATURES.index("is_depot")] == 1.0
        assert is_depot == (s.target_action == DEPOT)


def test_infeasible_label_rejected():
    inst = generate(DistributionSpec("uniform", 0, 5, 10))
    with pytest.raises(ValueError):
        steps_from_label(inst, PartitionSolution([[0, 1]]))


def test_loss_matches_sequence_log_prob():
    inst = generate(DistributionSpec("uniform", 2, 25, 20))
    r = Router(inst)
    label = decode(default_policy(), inst, mode="greedy").partition
    glob, _ = steps_from_label(inst, label, r)
    pol = EdgeScorePolicy(random_theta(3))
    loss, _, _ = sl_loss_grad(pol.theta, glob, 0.0)
    assert loss == pytest.approx(-sequence_logp(pol, inst, label_actions(label, r)), abs=1e-9)


def test_loss_is_regulariser_when_targets_are_certain():
    sub = Subproblem((0,), 10, 1)
    steps = [LabeledStep(sub, (), 0, np.ones((1, len(FEATURES))), 0) for _ in range(4)]
    theta = random_theta(0)
    loss, _, acc = sl_loss_grad(theta, steps, 0.1)
    assert loss == 0.5 * 0.1 * float(theta @ theta)
    assert acc == 1.0


def test_gradient_matches_finite_differences():
    glob, _ = some_steps(4)
    steps = glob[:10]
    theta = random_theta(5)
    _, g, _ = sl_loss_grad(theta, steps, 1e-3)
    num = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = 1e-6
        num[i] = (sl_loss_grad(theta + e, steps, 1e-3)[0] - sl_loss_grad(theta - e, steps, 1e-3)[0]) / 2e-6
    assert np.max(np.abs(g - num) / np.maximum(np.abs(num), 1e-8)) < 1e-6


def test_duplicated_steps_double_the_gradient():
    glob, loc = some_steps(6)
    steps = glob + loc
    theta = random_theta(7)
    _, g1, _ = sl_loss_grad(theta, steps, 0.0)
    _, g2, _ = sl_loss_grad(theta, steps + steps, 0.0)
    assert np.allclose(g2, 2 * g1, rtol=1e-12, atol=1e-12)


def test_zero_learning_rate_leaves_policy():
    glob, _ = some_steps(8)
    pol = EdgeScorePolicy(random_theta(9))
    new, rep = sl_step(pol, glob, 0.0, 0.0)
    assert np.array_equal(new.theta, pol.theta)
    assert np.isfinite(rep.loss) and 0 <= rep.accuracy <= 1


def test_descent_step_lowers_loss():
    glob, _ = some_steps(10)
    pol = EdgeScorePolicy.zeros()
    new, rep = sl_step(pol, glob, 1e-6, 0.1)
    assert sl_loss_grad(new.theta, glob, 1e-6)[0] < rep.loss


def test_empty_step_list():
    with pytest.raises(ValueError):
        sl_step(default_policy(), [], 0.0, 0.1)


def test_zero_rounds_without_bootstrap_is_identity():
    g, l = default_policy(), EdgeScorePolicy(random_theta(0))
    g2, l2, log = train_sl(SlConfig(rounds=0), DistributionSpec("uniform", 0, 20, 30), g, l,
                           bootstrap=False)
    assert log == []
    assert np.array_equal(g2.theta, g.theta) and np.array_equal(l2.theta, l.theta)


def test_training_is_deterministic(tmp_path):
    cfg = SlConfig(rounds=1, instances_per_round=4, beam_size=2, K_label=1, steps_per_round=5,
                   bootstrap_steps=5, batch_size=2)
    dist = DistributionSpec("uniform", 0, 20, 30)
    g1, l1, _ = train_sl(cfg, dist, log_path=tmp_path / "a.csv")
    g2, l2, log = train_sl(cfg, dist, log_path=tmp_path / "b.csv",
                           label_cache=tmp_path / "labels.jsonl")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert np.array_equal(g1.theta, g2.theta) and np.array_equal(l1.theta, l2.theta)
    assert [row["round"] for row in log] == [0, 1]
    rows = [json.loads(line) for line in (tmp_path / "labels.jsonl").read_text().splitlines()]
    assert len(rows) == 4 and set(rows[0]) == {"round", "index", "instance", "label"}
