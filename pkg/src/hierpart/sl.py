"""Self-imitation training.

Labels come from running the current policies with beam search at every
level; the policies are then fit to those labels by per-step maximum
likelihood with an L2 penalty. Training starts from a short imitation of
sweep partitions so the first labels are already sensible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hierarchy import SolveOptions, global_partition, refine
from .instance import DistributionSpec, Instance, Subproblem, generate
from .policy import (
    DEPOT,
    DecodeContext,
    EdgeScorePolicy,
    PolicyError,
    step_features,
    sweep_decode,
)
from .routing import PermSolverConfig, Router
from .rl import clip
from .solution import PartitionSolution, validate_partition


@dataclass
class SlConfig:
    beam_size: int = 16
    rounds: int = 5
    instances_per_round: int = 100
    lambda_g: float = 1e-6
    lambda_l: float = 1e-6
    learning_rate: float = 0.2
    K_label: int = 3
    seed: int = 0
    steps_per_round: int = 100
    batch_size: int = 10
    bootstrap_steps: int = 200

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.lambda_g < 0 or self.lambda_l < 0:
            raise ValueError("regularisation coefficients must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.rounds < 0 or self.instances_per_round < 1 or self.batch_size < 1:
            raise ValueError("invalid round sizes")


@dataclass
class LabeledStep:
    """One supervised decision: the state reached by replaying ``partial``
    on ``subproblem``, and the labelled next action (:data:`DEPOT` for a
    depot return). ``features`` caches the feasible-action feature rows,
    ``target_index`` the row of the target."""

    subproblem: Subproblem
    partial: tuple[int, ...]
    target_action: int
    features: np.ndarray = field(repr=False)
    target_index: int = 0


def generate_label(
    inst: Instance,
    global_policy: EdgeScorePolicy,
    local_policy: EdgeScorePolicy,
    beam_size: int = 16,
    K_label: int = 3,
    perm_cfg: PermSolverConfig | None = None,
    router: Router | None = None,
) -> PartitionSolution:
    """Beam search at the global level and at ``K_label`` improving-only
    local levels. The greedy pipeline runs too and the cheaper of the two
    is returned, so a label never costs more than greedy decoding."""
    router = router or Router(inst, perm_cfg)
    best, best_cost = None, np.inf
    for mode in ("beam", "greedy"):
        opts = SolveOptions(mode=mode, beam_width=beam_size, accept="if_better")
        c0 = global_partition(inst, global_policy, mode, False, beam_width=beam_size, router=router)
        c, _, costs = refine(c0, inst, local_policy, K_label, opts, router)
        if costs[-1] < best_cost:
            best, best_cost = c, costs[-1]
    return best


def _replay(inst: Instance, sub: Subproblem, actions: Sequence[int]) -> list[LabeledStep]:
    ctx = DecodeContext(inst, sub)
    state = ctx.initial_state()
    out = []
    for t, a in enumerate(actions):
        cand, depot_ok = state.feasible()
        feats = step_features(state, cand)
        acts = np.append(cand, DEPOT) if depot_ok else cand
        if not depot_ok:
            feats = feats[:-1]
        local = DEPOT if a == DEPOT else ctx.local(a)
        hit = np.flatnonzero(acts == local)
        if len(hit) == 0:
            raise PolicyError(f"label action {a} is infeasible at step {t}")
        out.append(LabeledStep(sub, tuple(actions[:t]), int(a), feats, int(hit[0])))
        state.apply(local)
    if not state.done:
        raise PolicyError("label does not cover the subproblem")
    return out


def label_actions(label: PartitionSolution, router: Router) -> list[int]:
    """Serialise a partition: each subgraph in tour order, depot returns between."""
    acts: list[int] = []
    for i, s in enumerate(label.subgraphs):
        if i:
            acts.append(DEPOT)
        acts.extend(router.tour(s))
    return acts


def steps_from_label(
    inst: Instance, label: PartitionSolution, router: Router | None = None
) -> tuple[list[LabeledStep], list[LabeledStep]]:
    """Global and local supervised steps for one labelled instance.

    Global steps replay the whole label on the instance. Local steps replay,
    for every cyclically adjacent pair of label subgraphs, that pair's split
    on the two-route subproblem of their union.
    """
    report = validate_partition(label, inst)
    if not report.ok:
        raise PolicyError(f"infeasible label: {report}")
    router = router or Router(inst)
    glob = _replay(inst, Subproblem.whole(inst), label_actions(label, router))
    loc: list[LabeledStep] = []
    n_c = len(label)
    if n_c >= 2:
        for i in range(n_c):
            a, b = label[i], label[(i + 1) % n_c]
            sp = Subproblem(a + b, inst.capacity, 2, min_routes=2)
            loc.extend(_replay(inst, sp, label_actions(PartitionSolution([a, b]), router)))
    return glob, loc


@dataclass
class SlReport:
    loss: float
    accuracy: float
    grad_norm: float
    gradient: np.ndarray = field(repr=False)


def sl_loss_grad(theta: np.ndarray, steps: Sequence[LabeledStep], lambda_l2: float,
                 temperature: float = 1.0) -> tuple[float, np.ndarray, float]:
    """Summed negative log-likelihood plus ``lambda/2 * |theta|^2``, its
    gradient, and the fraction of steps whose target is the argmax."""
    if not steps:
        raise ValueError("empty step list")
    loss = 0.0
    grad = np.zeros_like(theta)
    hits = 0
    for t, s in enumerate(steps):
        z = s.features @ theta / temperature
        zmax = z.max()
        lse = zmax + np.log(np.exp(z - zmax).sum())
        nll = lse - z[s.target_index]
        if not np.isfinite(nll):
            raise FloatingPointError(f"non-finite loss at step {t}")
        p = np.exp(z - lse)
        loss += nll
        grad += (p @ s.features - s.features[s.target_index]) / temperature
        hits += int(np.argmax(z) == s.target_index)
    loss += 0.5 * lambda_l2 * float(theta @ theta)
    grad += lambda_l2 * theta
    return float(loss), grad, hits / len(steps)


def sl_step(policy: EdgeScorePolicy, steps: Sequence[LabeledStep], lambda_l2: float,
            lr: float) -> tuple[EdgeScorePolicy, SlReport]:
    """One clipped gradient-descent step on the summed step loss."""
    loss, grad, acc = sl_loss_grad(policy.theta, steps, lambda_l2, policy.temperature)
    norm = float(np.linalg.norm(grad))
    new = policy.with_theta(policy.theta - lr * clip(grad))
    return new, SlReport(loss, acc, norm, grad)


# -- training loop ----------------------------------------------------------------------------

LOG_COLUMNS = ("round", "mean_label_cost", "loss", "step_accuracy")


def _batches(rng: np.random.Generator, per_instance: list[list[LabeledStep]], n_steps: int,
             batch_size: int):
    # a batch is every step of batch_size randomly chosen labelled instances
    pool = [s for s in per_instance if s]
    if not pool:
        return
    for _ in range(n_steps):
        pick = rng.choice(len(pool), size=min(batch_size, len(pool)), replace=False)
        yield [st for i in sorted(pick) for st in pool[i]]


def _fit(policy, per_instance, n_steps, cfg, lam, rng):
    losses, accs = [], []
    for batch in _batches(rng, per_instance, n_steps, cfg.batch_size):
        policy, rep = sl_step(policy, batch, lam, cfg.learning_rate)
        losses.append(rep.loss / len(batch))
        accs.append(rep.accuracy)
    return policy, (float(np.mean(losses)) if losses else float("nan")), (
        float(np.mean(accs)) if accs else float("nan"))


def train_sl(
    cfg: SlConfig,
    distribution: DistributionSpec,
    global_policy: EdgeScorePolicy | None = None,
    local_policy: EdgeScorePolicy | None = None,
    *,
    bootstrap: bool = True,
    log_path: str | Path | None = None,
    label_cache: str | Path | None = None,
) -> tuple[EdgeScorePolicy, EdgeScorePolicy, list[dict]]:
    """Bootstrap on sweep labels (logged as round 0), then ``cfg.rounds``
    rounds of label generation with the current policies followed by
    independent fits of the global and local policies.

    ``loss`` in the log is the mean per-step negative log-likelihood.
    """
    rng = np.random.default_rng(cfg.seed)
    g_pol = (global_policy or EdgeScorePolicy.zeros()).copy()
    l_pol = (local_policy or EdgeScorePolicy.zeros()).copy()
    log: list[dict] = []

    def sample_instances():
        return [generate(distribution.with_seed(int(s)))
                for s in rng.integers(2**62, size=cfg.instances_per_round)]

    def fit_round(labelled, n_steps, rnd):
        nonlocal g_pol, l_pol
        g_steps, l_steps, costs = [], [], []
        for inst, label, router in labelled:
            gs, ls = steps_from_label(inst, label, router)
            g_steps.append(gs)
            l_steps.append(ls)
            costs.append(router.f_cost(label))
        g_pol, g_loss, g_acc = _fit(g_pol, g_steps, n_steps, cfg, cfg.lambda_g, rng)
        l_pol, _, _ = _fit(l_pol, l_steps, n_steps, cfg, cfg.lambda_l, rng)
        row = {"round": rnd, "mean_label_cost": float(np.mean(costs)),
               "loss": g_loss, "step_accuracy": g_acc}
        log.append(row)
        return row

    cache = open(label_cache, "w", encoding="utf-8") if label_cache else None
    try:
        if bootstrap and cfg.bootstrap_steps:
            labelled = []
            for inst in sample_instances():
                r = Router(inst)
                labelled.append((inst, sweep_decode(inst), r))
            fit_round(labelled, cfg.bootstrap_steps, 0)
        for rnd in range(1, cfg.rounds + 1):
            labelled = []
            for i, inst in enumerate(sample_instances()):
                r = Router(inst)
                label = generate_label(inst, g_pol, l_pol, cfg.beam_size, cfg.K_label, router=r)
                labelled.append((inst, label, r))
                if cache:
                    cache.write(json.dumps({"round": rnd, "index": i, "instance": inst.to_dict(),
                                            "label": label.to_dict()}) + "\n")
            fit_round(labelled, cfg.steps_per_round, rnd)
    finally:
        if cache:
            cache.close()
    if log_path is not None:
        write_sl_log(log, log_path)
    return g_pol, l_pol, log


def write_sl_log(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(LOG_COLUMNS))
        w.writeheader()
        w.writerows(rows)
