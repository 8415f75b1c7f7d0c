"""Autoregressive partition policies.

A partition is decoded node by node: at every step the policy either picks an
unvisited customer for the subgraph under construction or returns to the
depot, which closes that subgraph. :class:`EdgeScorePolicy` scores each
feasible action with a linear function of eight hand-built features and
normalises with a masked softmax.

Feasibility is stricter than "the customer fits": every action must leave a
state from which the remaining customers can still be packed into the
remaining route budget, so decoding never dead-ends.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .instance import Instance, InstanceError, Subproblem
from .solution import PartitionSolution

DEPOT = -1

FEATURES: tuple[str, ...] = (
    "dist_last",
    "dist_depot",
    "demand_frac",
    "remaining_capacity_frac",
    "remaining_fraction",
    "angle_gap",
    "is_depot",
    "knn_mean_dist",
)
KNN = 5


class PolicyError(ValueError):
    pass


class CheckpointError(PolicyError):
    pass


# -- packing feasibility ------------------------------------------------------


@numba.njit(cache=True)
def _subset_sum_hits(counts, r, lo):
    # is some multiset-subset sum in [lo, r] reachable?
    if lo <= 0:
        return True
    if lo > r:
        return False
    reach = np.zeros(r + 1, dtype=np.bool_)
    reach[0] = True
    for v in range(1, counts.shape[0]):
        for _ in range(counts[v]):
            if v > r:
                break
            for s in range(r, v - 1, -1):
                if reach[s - v]:
                    reach[s] = True
    for s in range(lo, r + 1):
        if reach[s]:
            return True
    return False


@numba.njit(cache=True)
def _ffd(counts, r, L, D):
    bins = np.full(L + 1, D, dtype=np.int64)
    bins[0] = r
    for v in range(counts.shape[0] - 1, 0, -1):
        for _ in range(counts[v]):
            placed = False
            for b in range(L + 1):
                if bins[b] >= v:
                    bins[b] -= v
                    placed = True
                    break
            if not placed:
                return False
    return True


@numba.njit(cache=True)
def _total(counts):
    t = 0
    for v in range(counts.shape[0]):
        t += v * counts[v]
    return t


@numba.njit(cache=True)
def _pack_search(counts, r, L, D, limit):
    """Exact packing by bin completion; False also when ``limit`` nodes run out.

    Bins are filled one at a time (the partial route first) and within a
    bin the number of items of each size is chosen from the largest size
    down, so level ``d`` is bin ``d // nv`` and size ``nv - d % nv``. A
    choice is pruned when the bin could not be topped up from smaller items
    without wasting more than the slack. Fresh bins are interchangeable, so
    their fill vectors must be lexicographically non-increasing.
    """
    nv = counts.shape[0] - 1
    total = _total(counts)
    if total <= r:
        return True
    if L == 0 or nv <= 0:
        return False
    work = counts.copy()
    depth = (L + 1) * nv
    X = np.zeros(depth, dtype=np.int64)
    applied = np.zeros(depth, dtype=np.bool_)
    room = np.zeros(depth, dtype=np.int64)
    slack = np.zeros(depth, dtype=np.int64)
    rest = np.zeros(depth, dtype=np.int64)
    below = np.zeros(depth, dtype=np.int64)
    tight = np.zeros(depth, dtype=np.bool_)
    room[0], slack[0], rest[0], below[0] = r, r + L * D - total, total, total
    X[0] = min(work[nv], r // nv) + 1
    d = 0
    nodes = 0
    while d >= 0:
        k = d // nv
        v = nv - d % nv
        if applied[d]:
            work[v] += X[d]
            applied[d] = False
        X[d] -= 1
        if X[d] < 0:
            d -= 1
            continue
        left = room[d] - v * X[d]
        below_next = below[d] - v * work[v]
        if left - min(left, below_next) > slack[d]:
            # fewer items of this size only leaves more room unfillable
            X[d] = 0
            d -= 1
            continue
        work[v] -= X[d]
        applied[d] = True
        nodes += 1
        if nodes > limit:
            return False
        rest_c = rest[d] - v * X[d]
        if rest_c <= left:
            return True
        tight_c = tight[d] and X[d] == X[d - nv]
        e = d + 1
        if v > 1:
            room[e], slack[e], rest[e], below[e] = left, slack[d], rest_c, below_next
            hi = min(work[v - 1], left // (v - 1))
        else:
            if left > slack[d] or k == L:
                continue
            room[e], slack[e], rest[e], below[e] = D, slack[d] - left, rest_c, rest_c
            tight_c = k >= 1
            hi = min(work[nv], D // nv)
        if tight_c and X[e - nv] < hi:
            hi = X[e - nv]
        tight[e] = tight_c
        X[e] = hi + 1
        applied[e] = False
        d = e
    return False


SEARCH_LIMIT = 20000


@numba.njit(cache=True)
def _completable(counts, r, L, D, total):
    """Can the remaining items (``counts[v]`` of size ``v``) be served by the
    current route (residual ``r``) plus ``L`` fresh routes of capacity ``D``?

    Exact for ``L <= 1``. For ``L >= 2`` a True answer always comes with a
    packing (first-fit-decreasing, then a bounded exact search), so the
    test never accepts an unpackable state; it can only reject a packable
    one if the search budget runs out.
    """
    if total == 0:
        return True
    if total > r + L * D:
        return False
    if L == 0:
        return total <= r
    # first-fit-decreasing cannot fail on size v while the items of size >= v
    # total at most r + L*D - L*(v-1)
    p = 0
    ok = True
    for v in range(counts.shape[0] - 1, 0, -1):
        if counts[v] > 0:
            p += v * counts[v]
            if p > r + L * D - L * (v - 1):
                ok = False
                break
    if ok:
        return True
    if L == 1:
        return _subset_sum_hits(counts, r, total - D)
    if _ffd(counts, r, L, D):
        return True
    return _pack_search(counts, r, L, D, SEARCH_LIMIT)


@numba.njit(cache=True)
def _feasible_values(counts, r, L, D, total, current_nonempty, block_last):
    """Per demand value: may a customer of that demand be chosen next? Plus depot."""
    ok = np.zeros(counts.shape[0], dtype=np.bool_)
    if not block_last:
        for u in range(1, counts.shape[0]):
            if counts[u] == 0 or u > r:
                continue
            counts[u] -= 1
            ok[u] = _completable(counts, r - u, L, D, total - u)
            counts[u] += 1
    depot_ok = False
    if current_nonempty and L >= 1:
        depot_ok = _completable(counts, D, L - 1, D, total)
    return ok, depot_ok


# -- features -------------------------------------------------------------------


@numba.njit(cache=True)
def _features(cand, last, dist_cc, dist_dc, demand, cap, rem_cap, frac_rem,
              angle, ref_angle, has_ref, nbr, remaining, knn):
    nc = cand.shape[0]
    out = np.zeros((nc + 1, 8))
    for a in range(nc):
        j = cand[a]
        if last < 0:
            out[a, 0] = dist_dc[j]
        else:
            out[a, 0] = dist_cc[last, j]
        out[a, 1] = dist_dc[j]
        out[a, 2] = demand[j] / cap
        if has_ref:
            gap = abs(angle[j] - ref_angle)
            if gap > np.pi:
                gap = 2.0 * np.pi - gap
            out[a, 5] = gap / np.pi
        cnt = 0
        s = 0.0
        row = nbr[j]
        for t in range(row.shape[0]):
            o = row[t]
            if o != j and remaining[o]:
                s += dist_cc[j, o]
                cnt += 1
                if cnt == knn:
                    break
        if cnt > 0:
            out[a, 7] = s / cnt
    out[nc, 0] = dist_dc[last] if last >= 0 else 0.0
    out[nc, 3] = rem_cap / cap
    out[nc, 4] = frac_rem
    out[nc, 6] = 1.0
    return out


# -- decode context and state ---------------------------------------------------------


class DecodeContext:
    """Arrays for decoding one subproblem, indexed by local customer position."""

    def __init__(self, inst: Instance, sub: Subproblem | None = None):
        sub = sub or Subproblem.whole(inst)
        sub.check(inst)
        self.inst = inst
        self.sub = sub
        self.nodes = np.array(sub.nodes, dtype=np.int64)
        self.m = len(self.nodes)
        self.capacity = int(sub.capacity)
        self.max_returns = int(sub.max_returns)
        self.min_routes = int(sub.min_routes)
        gidx = self.nodes + 1
        self.dist_cc = np.ascontiguousarray(inst.dist[np.ix_(gidx, gidx)])
        self.dist_dc = np.ascontiguousarray(inst.dist[0, gidx])
        self.nbr = np.ascontiguousarray(np.argsort(self.dist_cc, axis=1, kind="stable"))
        self.angle = np.ascontiguousarray(inst.angles[self.nodes])
        self.xy = inst.customers[self.nodes]
        self.demand = inst.demands[self.nodes].astype(np.int64)
        self.maxv = int(self.demand.max())
        self._local = {int(v): i for i, v in enumerate(self.nodes)}

    def local(self, customer: int) -> int:
        try:
            return self._local[int(customer)]
        except KeyError:
            raise PolicyError(f"customer {customer} is not part of this subproblem") from None

    def initial_state(self) -> "DecodeState":
        st = DecodeState(self)
        if not _completable(st.counts, self.capacity, self.max_returns - 1,
                            self.capacity, st.rem_demand):
            raise InstanceError(
                f"subproblem with demand {st.rem_demand} cannot be packed into "
                f"{self.max_returns} routes of capacity {self.capacity}"
            )
        if self.min_routes > min(self.max_returns, self.m):
            raise InstanceError("min_routes cannot be met")
        return st


class DecodeState:
    """Partial partition of a subproblem.

    ``current`` is the subgraph under construction, ``closed`` the finished
    ones, ``returns_used`` the number of depot returns so far.
    """

    __slots__ = ("ctx", "remaining", "counts", "n_remaining", "rem_demand",
                 "current", "cur_demand", "returns_used", "closed", "last",
                 "cur_sx", "cur_sy", "prev_angle", "actions", "logp")

    def __init__(self, ctx: DecodeContext):
        self.ctx = ctx
        self.remaining = np.ones(ctx.m, dtype=np.bool_)
        self.counts = np.bincount(ctx.demand, minlength=ctx.maxv + 1).astype(np.int64)
        self.n_remaining = ctx.m
        self.rem_demand = int(ctx.demand.sum())
        self.current: list[int] = []
        self.cur_demand = 0
        self.returns_used = 0
        self.closed: list[list[int]] = []
        self.last = DEPOT
        self.cur_sx = 0.0
        self.cur_sy = 0.0
        self.prev_angle = math.nan
        self.actions: list[int] = []
        self.logp = 0.0

    def copy(self) -> "DecodeState":
        new = DecodeState.__new__(DecodeState)
        new.ctx = self.ctx
        new.remaining = self.remaining.copy()
        new.counts = self.counts.copy()
        new.n_remaining = self.n_remaining
        new.rem_demand = self.rem_demand
        new.current = list(self.current)
        new.cur_demand = self.cur_demand
        new.returns_used = self.returns_used
        new.closed = [list(s) for s in self.closed]
        new.last = self.last
        new.cur_sx = self.cur_sx
        new.cur_sy = self.cur_sy
        new.prev_angle = self.prev_angle
        new.actions = list(self.actions)
        new.logp = self.logp
        return new

    @property
    def remaining_capacity(self) -> int:
        return self.ctx.capacity - self.cur_demand

    @property
    def done(self) -> bool:
        return self.n_remaining == 0

    @property
    def routes_left(self) -> int:
        """Routes that may still be opened after the current one."""
        return self.ctx.max_returns - self.returns_used - 1

    def centroid_angle(self) -> float:
        ctx = self.ctx
        if not self.current:
            return self.prev_angle
        k = len(self.current)
        dx = self.cur_sx / k - ctx.inst.depot[0]
        dy = self.cur_sy / k - ctx.inst.depot[1]
        return math.atan2(dy, dx) % (2 * math.pi)

    def feasible(self) -> tuple[np.ndarray, bool]:
        """Local indices of selectable customers, and whether the depot is selectable."""
        ctx = self.ctx
        block_last = self.returns_used + 1 < ctx.min_routes and self.n_remaining == 1
        ok_vals, depot_ok = _feasible_values(
            self.counts, self.remaining_capacity, self.routes_left, ctx.capacity,
            self.rem_demand, len(self.current) > 0, block_last,
        )
        cand = np.flatnonzero(self.remaining & ok_vals[ctx.demand])
        return cand, bool(depot_ok)

    def apply(self, action: int) -> None:
        ctx = self.ctx
        self.actions.append(action)
        if action == DEPOT:
            if not self.current:
                raise PolicyError("depot return with an empty subgraph")
            self.prev_angle = self.centroid_angle()
            self.closed.append(self.current)
            self.current = []
            self.cur_demand = 0
            self.cur_sx = self.cur_sy = 0.0
            self.returns_used += 1
            self.last = DEPOT
            return
        if not self.remaining[action]:
            raise PolicyError(f"customer {int(ctx.nodes[action])} already visited")
        d = int(ctx.demand[action])
        self.remaining[action] = False
        self.counts[d] -= 1
        self.n_remaining -= 1
        self.rem_demand -= d
        self.current.append(action)
        self.cur_demand += d
        self.cur_sx += ctx.xy[action, 0]
        self.cur_sy += ctx.xy[action, 1]
        self.last = action
        if self.n_remaining == 0:
            self.closed.append(self.current)
            self.current = []
            self.cur_demand = 0

    def subgraphs(self) -> list[tuple[int, ...]]:
        nodes = self.ctx.nodes
        subs = [tuple(int(nodes[i]) for i in s) for s in self.closed]
        if self.current:
            subs.append(tuple(int(nodes[i]) for i in self.current))
        return subs

    def partition(self) -> PartitionSolution:
        if not self.done:
            raise PolicyError("decode has not finished")
        return PartitionSolution(self.subgraphs())

    def key(self) -> tuple:
        return (tuple(tuple(sorted(s)) for s in self.closed),
                tuple(sorted(self.current)), self.last)


def feasible_actions(state: DecodeState) -> list[int]:
    """Selectable actions as customer indices, with :data:`DEPOT` for a depot return."""
    cand, depot_ok = state.feasible()
    acts = [int(state.ctx.nodes[i]) for i in cand]
    if depot_ok:
        acts.append(DEPOT)
    return acts


def step_features(state: DecodeState, cand: np.ndarray) -> np.ndarray:
    """Feature rows for ``cand`` followed by one row for the depot return."""
    ctx = state.ctx
    ref = state.centroid_angle()
    has_ref = not math.isnan(ref)
    last = state.last
    return _features(
        cand, last, ctx.dist_cc, ctx.dist_dc, ctx.demand, float(ctx.capacity),
        float(state.remaining_capacity), state.n_remaining / ctx.m,
        ctx.angle, ref if has_ref else 0.0, has_ref, ctx.nbr, state.remaining, KNN,
    )


# -- policies ------------------------------------------------------------------------


@dataclass
class EdgeScorePolicy:
    """Linear action scores ``theta . features / temperature`` under a masked softmax."""

    theta: np.ndarray
    feature_spec: tuple[str, ...] = FEATURES
    temperature: float = 1.0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        self.feature_spec = tuple(self.feature_spec)
        if self.feature_spec != FEATURES:
            raise PolicyError(f"unsupported feature spec {self.feature_spec}")
        if len(self.theta) != len(self.feature_spec):
            raise PolicyError(
                f"theta has {len(self.theta)} entries for {len(self.feature_spec)} features"
            )
        if not self.temperature > 0:
            raise PolicyError("temperature must be positive")

    @classmethod
    def zeros(cls, temperature: float = 1.0) -> "EdgeScorePolicy":
        return cls(np.zeros(len(FEATURES)), FEATURES, temperature)

    def copy(self) -> "EdgeScorePolicy":
        return EdgeScorePolicy(self.theta.copy(), self.feature_spec, self.temperature)

    def with_theta(self, theta: np.ndarray) -> "EdgeScorePolicy":
        return EdgeScorePolicy(theta, self.feature_spec, self.temperature)

    def probs(self, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Softmax probabilities and log-probabilities over the rows of ``feats``."""
        if not np.all(np.isfinite(feats)):
            col = int(np.flatnonzero(~np.all(np.isfinite(feats), axis=0))[0])
            raise PolicyError(f"non-finite value in feature {self.feature_spec[col]!r}")
        z = feats @ self.theta / self.temperature
        if not np.all(np.isfinite(z)):
            raise PolicyError("non-finite logits (check theta)")
        z = z - z.max()
        logp = z - math.log(np.exp(z).sum())
        return np.exp(logp), logp

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "feature_spec": list(self.feature_spec),
            "temperature": float(self.temperature),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "EdgeScorePolicy":
        if not isinstance(record, dict):
            raise CheckpointError("checkpoint must be a JSON object")
        for key in ("theta", "feature_spec", "temperature"):
            if key not in record:
                raise CheckpointError(f"checkpoint missing {key!r}")
        try:
            return cls(record["theta"], record["feature_spec"], float(record["temperature"]))
        except (TypeError, ValueError) as exc:
            raise CheckpointError(str(exc)) from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EdgeScorePolicy":
        text = Path(path).read_text(encoding="utf-8")
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: invalid JSON ({exc.msg})") from exc
        return cls.from_dict(record)


def default_policy() -> EdgeScorePolicy:
    """Hand-set weights: stay close to the last node and the route's heading,
    return to the depot once the vehicle is nearly full."""
    theta = np.array([-12.0, 0.0, 0.0, -8.0, 0.0, -4.0, 1.0, 0.0])
    return EdgeScorePolicy(theta)


@dataclass
class ActionDistribution:
    """One step's distribution. ``actions`` holds customer indices and
    :data:`DEPOT`; infeasible actions are listed with probability 0."""

    actions: list[int]
    probs: np.ndarray
    logps: np.ndarray
    features: np.ndarray = field(repr=False)
    feasible: np.ndarray = field(repr=False)

    @property
    def candidates(self) -> list[tuple[int, float, float]]:
        return [(a, float(p), float(lp)) for a, p, lp in zip(self.actions, self.probs, self.logps)]


def _step(policy: EdgeScorePolicy, state: DecodeState):
    """(local actions, features, probs, logps) over the feasible actions only."""
    cand, depot_ok = state.feasible()
    feats = step_features(state, cand)
    if depot_ok:
        acts = np.append(cand, DEPOT)
    else:
        acts = cand
        feats = feats[:-1]
    if len(acts) == 0:
        raise PolicyError("no feasible action")
    p, logp = policy.probs(feats)
    return acts, feats, p, logp


def score_step(policy: EdgeScorePolicy, state: DecodeState) -> ActionDistribution:
    """Distribution over every remaining customer and the depot at ``state``."""
    acts, feats, p, logp = _step(policy, state)
    ctx = state.ctx
    all_local = np.flatnonzero(state.remaining)
    actions = [int(ctx.nodes[i]) for i in all_local] + [DEPOT]
    probs = np.zeros(len(actions))
    logps = np.full(len(actions), -np.inf)
    full_feats = np.zeros((len(actions), feats.shape[1]))
    feasible = np.zeros(len(actions), dtype=bool)
    pos = {int(i): k for k, i in enumerate(all_local)}
    for a, f, pa, la in zip(acts, feats, p, logp):
        k = len(actions) - 1 if a == DEPOT else pos[int(a)]
        probs[k], logps[k], full_feats[k], feasible[k] = pa, la, f, True
    return ActionDistribution(actions, probs, logps, full_feats, feasible)


def grad_logp(feats: np.ndarray, p: np.ndarray, k: int, temperature: float) -> np.ndarray:
    """d log p_k / d theta for a linear-softmax step."""
    return (feats[k] - p @ feats) / temperature


def entropy(p: np.ndarray, logp: np.ndarray) -> float:
    return float(-(p * logp).sum())


def grad_entropy(feats: np.ndarray, p: np.ndarray, logp: np.ndarray, temperature: float) -> np.ndarray:
    """d H / d theta where H = -sum p log p."""
    h = -(p * logp).sum()
    dz = -p * (logp + h)
    return dz @ feats / temperature


# -- decoding ----------------------------------------------------------------------------


@dataclass
class StepRecord:
    features: np.ndarray
    probs: np.ndarray
    logps: np.ndarray
    chosen: int


@dataclass
class DecodeResult:
    partition: PartitionSolution
    logp: float
    actions: list[int]
    steps: list[StepRecord] | None = None
    cost: float | None = None
    # beam mode: (routed cost, log-probability) of every finished sequence
    finished: list[tuple[float, float]] | None = None


def _to_global(ctx: DecodeContext, actions: Sequence[int]) -> list[int]:
    return [DEPOT if a == DEPOT else int(ctx.nodes[a]) for a in actions]


def _rollout(policy, ctx, state, how, rng, record, stop_after_first):
    steps: list[StepRecord] | None = [] if record else None
    while not state.done:
        if stop_after_first and state.closed:
            break
        acts, feats, p, logp = _step(policy, state)
        if how == "greedy":
            k = int(np.argmax(logp))
        else:
            k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
            k = min(k, len(p) - 1)
        if record:
            steps.append(StepRecord(feats, p, logp, k))
        state.logp += float(logp[k])
        state.apply(int(acts[k]))
    return state, steps


def _result(ctx: DecodeContext, state: DecodeState, steps=None, cost=None,
            finished=None) -> DecodeResult:
    return DecodeResult(PartitionSolution(state.subgraphs()), state.logp,
                        _to_global(ctx, state.actions), steps, cost, finished)


def decode(
    policy: EdgeScorePolicy,
    inst: Instance,
    sub: Subproblem | None = None,
    mode: str = "greedy",
    *,
    beam_width: int = 16,
    rng: np.random.Generator | int | None = None,
    router=None,
    record: bool = False,
    stop_after_first: bool = False,
) -> DecodeResult:
    """Decode a feasible partition of ``sub`` (the whole instance by default).

    ``mode`` is ``"greedy"``, ``"sample"`` (draws from ``rng``) or ``"beam"``.
    The returned ``logp`` is the sum of the chosen step log-probabilities.
    Beam mode keeps the ``beam_width`` most likely prefixes per step and
    returns the finished sequence with the lowest routed cost (ties go to
    the higher log-probability); the greedy sequence is always among the
    finished candidates. ``stop_after_first`` ends the decode as soon as the
    first subgraph is closed, returning a partial partition.
    """
    ctx = sub if isinstance(sub, DecodeContext) else DecodeContext(inst, sub)
    if mode == "beam":
        if record or stop_after_first:
            raise ValueError("beam mode does not record steps or stop early")
        return _beam(policy, ctx, beam_width, router)
    if mode == "sample":
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
    elif mode != "greedy":
        raise ValueError(f"unknown decode mode {mode!r}")
    state, steps = _rollout(policy, ctx, ctx.initial_state(), mode, rng, record, stop_after_first)
    return _result(ctx, state, steps)


def _beam(policy: EdgeScorePolicy, ctx: DecodeContext, width: int, router) -> DecodeResult:
    from .routing import Router

    if width < 1:
        raise ValueError("beam width must be >= 1")
    router = router or Router(ctx.inst)
    greedy, _ = _rollout(policy, ctx, ctx.initial_state(), "greedy", None, False, False)
    if width == 1:
        cost = router.f_cost(greedy.subgraphs())
        return _result(ctx, greedy, cost=cost, finished=[(cost, greedy.logp)])
    finished: list[DecodeState] = [greedy]
    beams = [ctx.initial_state()]
    while beams:
        scores, parents, acts_all = [], [], []
        for bi, st in enumerate(beams):
            acts, _, _, logp = _step(policy, st)
            scores.append(st.logp + logp)
            parents.append(np.full(len(acts), bi))
            acts_all.append(acts)
        scores = np.concatenate(scores)
        parents = np.concatenate(parents)
        acts_all = np.concatenate(acts_all)
        order = np.argsort(-scores, kind="stable")
        nxt: list[DecodeState] = []
        seen = set()
        for idx in order:
            st = beams[parents[idx]].copy()
            st.logp = float(scores[idx])
            st.apply(int(acts_all[idx]))
            # identical states have identical futures; keep the likelier one
            key = st.key()
            if key in seen:
                continue
            seen.add(key)
            (finished if st.done else nxt).append(st)
            if len(seen) >= width:
                break
        beams = nxt
    best, best_cost = None, math.inf
    summary = []
    for st in finished:
        cost = router.f_cost(st.subgraphs())
        summary.append((cost, st.logp))
        if best is None or cost < best_cost or (cost == best_cost and st.logp > best.logp):
            best, best_cost = st, cost
    return _result(ctx, best, cost=best_cost, finished=summary)


def sequence_logp(policy: EdgeScorePolicy, inst: Instance, actions: Sequence[int],
                  sub: Subproblem | None = None) -> float:
    """Re-score an action sequence (customer indices / :data:`DEPOT`) from scratch."""
    ctx = DecodeContext(inst, sub)
    state = ctx.initial_state()
    total = 0.0
    for a in actions:
        acts, _, _, logp = _step(policy, state)
        local = DEPOT if a == DEPOT else ctx.local(a)
        hit = np.flatnonzero(acts == local)
        if len(hit) == 0:
            raise PolicyError(f"action {a} is infeasible at step {len(state.actions)}")
        total += float(logp[hit[0]])
        state.apply(local)
    return total


# -- sweep --------------------------------------------------------------------------------


def sweep_order(inst: Instance, nodes: Sequence[int] | None = None) -> list[int]:
    """Customers sorted by polar angle about the depot (ties by index)."""
    nodes = list(range(inst.n)) if nodes is None else list(nodes)
    return sorted(nodes, key=lambda v: (float(inst.angles[v]), v))


def sweep_decode(inst: Instance, sub: Subproblem | None = None) -> PartitionSolution:
    """Classic sweep: walk customers by polar angle and cut when the next one
    does not fit.

    Runs through the same feasibility mask as the learned policies, so when
    a plain cut would break the route budget the sweep keeps filling the
    current route with the next customers (in angular order) that still fit.
    """
    ctx = DecodeContext(inst, sub)
    state = ctx.initial_state()
    order = [ctx.local(v) for v in sweep_order(inst, ctx.nodes.tolist())]
    pos = 0
    while not state.done:
        while not state.remaining[order[pos]]:
            pos += 1
        cand, depot_ok = state.feasible()
        allowed = set(cand.tolist())
        nxt = order[pos]
        if nxt in allowed:
            state.apply(nxt)
        elif depot_ok:
            state.apply(DEPOT)
        else:
            later = [v for v in order[pos:] if v in allowed]
            state.apply(later[0])
    return PartitionSolution(state.subgraphs())
