"""REINFORCE training of the global and local partition policies.

Rewards are negated routing costs. The global policy is rewarded with
``-f(C)`` for each sampled partition; the local policy with the cost saved
on the pair it re-split. Each group of samples drawn for one (sub)problem
shares a mean-reward baseline, and the objective carries a bonus on the
summed per-step entropy of the decoding distribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hierarchy import build_subproblems, order_by_polar, _place
from .instance import DistributionSpec, Instance, Subproblem, generate
from .policy import (
    DecodeContext,
    EdgeScorePolicy,
    PolicyError,
    StepRecord,
    _step,
    decode,
    entropy,
    grad_entropy,
    grad_logp,
)
from .routing import Router
from .solution import PartitionSolution

CLIP_NORM = 1.0


@dataclass
class RlConfig:
    samples_per_instance: int = 20
    lambda_entropy_global: float = 0.1
    lambda_entropy_local: float = 0.005
    learning_rate: float = 0.05
    learning_rate_local: float | None = None
    iterations: int = 100
    instances_per_iter: int = 1
    K_train: int = 3
    seed: int = 0
    eval_every: int = 0
    eval_instances: int = 16
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.samples_per_instance < 2:
            raise ValueError("samples_per_instance must be >= 2")
        if not self.learning_rate > 0 or (
            self.learning_rate_local is not None and not self.learning_rate_local > 0
        ):
            raise ValueError("learning rates must be positive")
        if self.iterations < 0 or self.instances_per_iter < 1 or self.K_train < 0:
            raise ValueError("invalid iteration counts")


@dataclass
class Trajectory:
    steps: list[StepRecord]
    reward: float
    entropy_sum: float
    partition: PartitionSolution
    logp: float

    def grad_logp(self, temperature: float) -> np.ndarray:
        g = np.zeros(self.steps[0].features.shape[1]) if self.steps else 0.0
        for s in self.steps:
            g += grad_logp(s.features, s.probs, s.chosen, temperature)
        return g

    def grad_entropy(self, temperature: float) -> np.ndarray:
        g = np.zeros(self.steps[0].features.shape[1]) if self.steps else 0.0
        for s in self.steps:
            g += grad_entropy(s.features, s.probs, s.logps, temperature)
        return g


def _trajectory(res, reward: float) -> Trajectory:
    h = sum(entropy(s.probs, s.logps) for s in res.steps)
    return Trajectory(res.steps, float(reward), float(h), res.partition, res.logp)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def rollout_global(
    inst: Instance,
    policy: EdgeScorePolicy,
    n_samples: int,
    seed: int | np.random.Generator | None = None,
    *,
    sub: Subproblem | None = None,
    router: Router | None = None,
) -> list[Trajectory]:
    """``n_samples`` sampled partitions of ``sub`` (default: the whole
    instance), each rewarded with minus its routed cost."""
    rng = _rng(seed)
    router = router or Router(inst)
    ctx = DecodeContext(inst, sub)
    out = []
    for _ in range(n_samples):
        res = decode(policy, inst, ctx, "sample", rng=rng, record=True)
        out.append(_trajectory(res, -router.f_cost(res.partition)))
    return out


def rollout_local(
    inst: Instance,
    c_prev: PartitionSolution,
    k: int,
    policy: EdgeScorePolicy,
    n_samples: int,
    seed: int | np.random.Generator | None = None,
    *,
    router: Router | None = None,
) -> list[tuple[tuple[int, int], list[Trajectory]]]:
    """Sample re-splits of every level-``k`` pair of ``c_prev``.

    A trajectory's reward is the pair's old routed cost minus its new one,
    so improving re-splits earn positive reward. Returned per pair together
    with the subgraph positions it covers.
    """
    rng = _rng(seed)
    router = router or Router(inst)
    out = []
    for sp, (p, q) in build_subproblems(c_prev, k, inst.capacity):
        old = router.cost(c_prev[p]) + router.cost(c_prev[q])
        ctx = DecodeContext(inst, sp)
        group = []
        for _ in range(n_samples):
            res = decode(policy, inst, ctx, "sample", rng=rng, record=True)
            if len(res.partition) != 2:
                raise PolicyError("local decode must produce two subgraphs")
            group.append(_trajectory(res, old - router.f_cost(res.partition)))
        out.append(((p, q), group))
    return out


@dataclass
class GradReport:
    grad_norm: float
    mean_advantage: float
    mean_reward: float
    gradient: np.ndarray = field(repr=False)


def group_gradient(trajs: Sequence[Trajectory], lambda_entropy: float,
                   temperature: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Ascent direction for one baseline group, and the advantages.

    Estimates the gradient of ``E[R] + lambda * E[sum_t H_t]`` as the group
    mean of ``A * dlogP + lambda * (dH + (H - mean H) * dlogP)``: the entropy
    term includes its score-function part so the estimate is unbiased.
    """
    if len(trajs) < 2:
        raise ValueError("a baseline group needs at least two trajectories")
    rewards = np.array([t.reward for t in trajs])
    hs = np.array([t.entropy_sum for t in trajs])
    adv = rewards - rewards.mean()
    hadv = hs - hs.mean()
    g = np.zeros(dim)
    for t, a, ha in zip(trajs, adv, hadv):
        if not t.steps:
            continue
        gl = t.grad_logp(temperature)
        g += a * gl
        if lambda_entropy:
            g += lambda_entropy * (t.grad_entropy(temperature) + ha * gl)
    return g / len(trajs), adv


def clip(g: np.ndarray, max_norm: float = CLIP_NORM) -> np.ndarray:
    n = float(np.linalg.norm(g))
    return g * (max_norm / n) if n > max_norm else g


def reinforce_step(
    policy: EdgeScorePolicy,
    trajectories: Sequence[Trajectory] | Sequence[Sequence[Trajectory]],
    lambda_entropy: float,
    lr: float,
) -> tuple[EdgeScorePolicy, GradReport]:
    """One clipped gradient-ascent step.

    ``trajectories`` is a single baseline group, or a list of groups whose
    gradients are averaged.
    """
    groups = [trajectories] if isinstance(trajectories[0], Trajectory) else list(trajectories)
    total = np.zeros_like(policy.theta)
    advs, rewards = [], []
    for grp in groups:
        g, adv = group_gradient(grp, lambda_entropy, policy.temperature, len(policy.theta))
        total += g
        advs.extend(adv)
        rewards.extend(t.reward for t in grp)
    total /= len(groups)
    if not np.all(np.isfinite(total)):
        raise FloatingPointError("non-finite policy gradient")
    norm = float(np.linalg.norm(total))
    new = policy.with_theta(policy.theta + lr * clip(total))
    return new, GradReport(norm, float(np.mean(advs)), float(np.mean(rewards)), total)


# -- exact enumeration (small instances) ---------------------------------------------------


def enumerate_trajectories(policy: EdgeScorePolicy, inst: Instance,
                           sub: Subproblem | None = None):
    """Every complete decode with its probability; only viable for tiny instances.

    Yields ``(actions, logp, steps, partition)`` where ``steps`` carries the
    step records needed for gradients.
    """
    ctx = DecodeContext(inst, sub)

    def rec(state, steps):
        if state.done:
            yield state, steps
            return
        acts, feats, p, logp = _step(policy, state)
        for k, a in enumerate(acts):
            nxt = state.copy()
            nxt.logp += float(logp[k])
            nxt.apply(int(a))
            yield from rec(nxt, steps + [StepRecord(feats, p, logp, k)])

    for state, steps in rec(ctx.initial_state(), []):
        yield state.actions, state.logp, steps, PartitionSolution(state.subgraphs())


def exact_objective(policy: EdgeScorePolicy, inst: Instance, lambda_entropy: float = 0.0,
                    router: Router | None = None, sub: Subproblem | None = None) -> float:
    """``E[-f(C)] + lambda * E[sum_t H_t]`` by full enumeration."""
    router = router or Router(inst)
    total = 0.0
    for _, logp, steps, part in enumerate_trajectories(policy, inst, sub):
        h = sum(entropy(s.probs, s.logps) for s in steps)
        total += math.exp(logp) * (-router.f_cost(part) + lambda_entropy * h)
    return total


def exact_gradient(policy: EdgeScorePolicy, inst: Instance, lambda_entropy: float = 0.0,
                   router: Router | None = None, sub: Subproblem | None = None) -> np.ndarray:
    """Analytic gradient of :func:`exact_objective`, built from the same
    per-step pieces the sampled estimator uses."""
    router = router or Router(inst)
    g = np.zeros_like(policy.theta)
    T = policy.temperature
    for _, logp, steps, part in enumerate_trajectories(policy, inst, sub):
        t = Trajectory(steps, -router.f_cost(part), sum(entropy(s.probs, s.logps) for s in steps),
                       part, logp)
        p = math.exp(logp)
        gl = t.grad_logp(T)
        g += p * (t.reward + lambda_entropy * t.entropy_sum) * gl
        if lambda_entropy and steps:
            g += p * lambda_entropy * t.grad_entropy(T)
    return g


# -- training loop -------------------------------------------------------------------------


LOG_COLUMNS = ("iter", "mean_reward", "grad_norm", "eval_cost")


def greedy_eval(policy: EdgeScorePolicy, instances: Iterable[Instance]) -> float:
    """Mean routed cost of greedy global decodes."""
    costs = [Router(i).f_cost(decode(policy, i, None, "greedy").partition) for i in instances]
    return float(np.mean(costs))


def _best(trajs: Sequence[Trajectory]) -> Trajectory:
    return max(trajs, key=lambda t: t.reward)


def train_rl(
    cfg: RlConfig,
    distribution: DistributionSpec,
    global_policy: EdgeScorePolicy | None = None,
    local_policy: EdgeScorePolicy | None = None,
    *,
    eval_set: Sequence[Instance] | None = None,
    log_path: str | Path | None = None,
) -> tuple[EdgeScorePolicy, EdgeScorePolicy, list[dict]]:
    """Train both policies from scratch (zero weights) or from the given ones.

    Per iteration and instance: decode with restart, updating the global
    policy on every other residual subproblem; then run ``K_train`` local
    levels over the resulting partition, updating the local policy once per
    level. The two policies have independent step sizes and never share a
    gradient.
    """
    g_pol = (global_policy or EdgeScorePolicy.zeros()).copy()
    l_pol = (local_policy or EdgeScorePolicy.zeros()).copy()
    lr_g = cfg.learning_rate
    lr_l = cfg.learning_rate_local or cfg.learning_rate
    rng = np.random.default_rng(cfg.seed)
    if eval_set is None and cfg.eval_every:
        eval_set = [generate(distribution.with_seed(int(s)))
                    for s in np.random.default_rng(cfg.seed + 1).integers(2**62, size=cfg.eval_instances)]
    log: list[dict] = []
    fh = writer = None
    if log_path is not None:
        fh = open(log_path, "w", newline="", encoding="utf-8")
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
    try:
        for it in range(cfg.iterations):
            rewards, norms = [], []
            for _ in range(cfg.instances_per_iter):
                inst = generate(distribution.with_seed(int(rng.integers(2**62))))
                router = Router(inst)
                g_pol, committed = _global_pass(inst, g_pol, cfg, rng, router, rewards, norms, lr_g)
                c = order_by_polar(PartitionSolution(committed), inst)
                for k in range(1, cfg.K_train + 1):
                    if len(c) < 2:
                        break
                    groups = rollout_local(inst, c, k, l_pol, cfg.samples_per_instance, rng, router=router)
                    l_pol, _ = reinforce_step(l_pol, [grp for _, grp in groups],
                                              cfg.lambda_entropy_local, lr_l)
                    c = _apply_best(c, groups, inst)
                    c = order_by_polar(c, inst)
            row = {
                "iter": it,
                "mean_reward": float(np.mean(rewards)) if rewards else float("nan"),
                "grad_norm": float(np.mean(norms)) if norms else float("nan"),
                "eval_cost": "",
            }
            if cfg.eval_every and (it + 1) % cfg.eval_every == 0:
                row["eval_cost"] = greedy_eval(g_pol, eval_set)
            log.append(row)
            if writer:
                writer.writerow(row)
                fh.flush()
            if cfg.checkpoint_every and cfg.checkpoint_dir and (it + 1) % cfg.checkpoint_every == 0:
                d = Path(cfg.checkpoint_dir)
                d.mkdir(parents=True, exist_ok=True)
                g_pol.save(d / f"global_{it + 1}.json")
                l_pol.save(d / f"local_{it + 1}.json")
    finally:
        if fh:
            fh.close()
    return g_pol, l_pol, log


def _global_pass(inst, g_pol, cfg, rng, router, rewards, norms, lr):
    remaining = list(range(inst.n))
    budget = inst.n_max
    committed: list[tuple[int, ...]] = []
    rnd = 0
    while remaining:
        sub = Subproblem(remaining, inst.capacity, budget)
        if rnd % 2 == 0:
            # residual subproblems are training instances in their own right
            trajs = rollout_global(inst, g_pol, cfg.samples_per_instance, rng, sub=sub, router=router)
            g_pol, rep = reinforce_step(g_pol, trajs, cfg.lambda_entropy_global, lr)
            rewards.append(rep.mean_reward)
            norms.append(rep.grad_norm)
            first = _best(trajs).partition[0]
        else:
            first = decode(g_pol, inst, sub, "sample", rng=rng, stop_after_first=True).partition[0]
        committed.append(first)
        taken = set(first)
        remaining = [v for v in remaining if v not in taken]
        budget -= 1
        rnd += 1
    return g_pol, committed


def _apply_best(c: PartitionSolution, groups, inst: Instance) -> PartitionSolution:
    subs = list(c.subgraphs)
    for (p, q), grp in groups:
        best = _best(grp)
        if best.reward > 0:
            subs[p], subs[q] = _place(list(best.partition.subgraphs), (subs[p], subs[q]), inst)
    return PartitionSolution(subs)


def write_log(rows: Sequence[dict], path: str | Path, columns: Sequence[str] = LOG_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        w.writerows(rows)
