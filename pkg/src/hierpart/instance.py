"""CVRP instances: the data model, random generators and JSON persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Literal

import numpy as np

Kind = Literal["uniform", "gaussian", "explosion", "rotation"]
KINDS: tuple[str, ...] = ("uniform", "gaussian", "explosion", "rotation")


class InstanceError(ValueError):
    """Raised when an instance violates its invariants."""


class InstanceFormatError(InstanceError):
    """Raised when an instance file cannot be parsed.

    ``field`` names the offending key (or ``None`` for whole-record errors).
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def compute_nmax(demands: Iterable[int], capacity: int) -> int:
    """Maximum number of depot returns: ``ceil(sum(demands) / capacity) + 1``."""
    demands = [int(d) for d in demands]
    if not demands:
        raise InstanceError("demands must be nonempty")
    if capacity < max(demands):
        raise InstanceError(
            f"capacity {capacity} is below the largest demand {max(demands)}"
        )
    total = sum(demands)
    return -(-total // capacity) + 1


@dataclass(frozen=True, eq=False)
class Instance:
    """A depot, customer coordinates with integer demands, and a vehicle capacity.

    Customers are addressed by 0-based index. Internally node 0 of
    :attr:`points` / :attr:`dist` is the depot and customer ``i`` is node ``i + 1``.
    """

    depot: tuple[float, float]
    customers: np.ndarray
    demands: np.ndarray
    capacity: int

    def __post_init__(self):
        depot = (float(self.depot[0]), float(self.depot[1]))
        customers = np.array(self.customers, dtype=np.float64).reshape(-1, 2)
        demands = np.array(self.demands, dtype=np.int64).reshape(-1)
        if len(customers) == 0:
            raise InstanceError("an instance needs at least one customer")
        if len(demands) != len(customers):
            raise InstanceError(
                f"{len(demands)} demands for {len(customers)} customers"
            )
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise InstanceError(f"capacity must be a positive integer, got {self.capacity}")
        if demands.min() < 1:
            raise InstanceError("demands must be positive")
        if demands.max() > self.capacity:
            raise InstanceError(
                f"demand {int(demands.max())} exceeds capacity {self.capacity}"
            )
        if not np.all(np.isfinite(customers)) or not all(map(math.isfinite, depot)):
            raise InstanceError("coordinates must be finite")
        customers.setflags(write=False)
        demands.setflags(write=False)
        object.__setattr__(self, "depot", depot)
        object.__setattr__(self, "customers", customers)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def n(self) -> int:
        return len(self.customers)

    @property
    def n_max(self) -> int:
        return compute_nmax(self.demands, self.capacity)

    @property
    def total_demand(self) -> int:
        return int(self.demands.sum())

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.vstack([np.asarray(self.depot)[None, :], self.customers])
        pts.setflags(write=False)
        return pts

    @cached_property
    def dist(self) -> np.ndarray:
        """Euclidean distance matrix over depot + customers, shape ``(n+1, n+1)``."""
        diff = self.points[:, None, :] - self.points[None, :, :]
        d = np.sqrt((diff**2).sum(-1))
        d.setflags(write=False)
        return d

    @cached_property
    def angles(self) -> np.ndarray:
        """Polar angle of every customer about the depot, in ``[0, 2*pi)``."""
        rel = self.customers - np.asarray(self.depot)
        a = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2 * np.pi)
        a.setflags(write=False)
        return a

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.depot == other.depot
            and self.capacity == other.capacity
            and np.array_equal(self.customers, other.customers)
            and np.array_equal(self.demands, other.demands)
        )

    def __hash__(self) -> int:
        return hash((self.depot, self.capacity, self.customers.tobytes(), self.demands.tobytes()))

    def to_dict(self) -> dict:
        return {
            "depot": [self.depot[0], self.depot[1]],
            "customers": self.customers.tolist(),
            "demands": [int(d) for d in self.demands],
            "capacity": self.capacity,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Instance":
        if not isinstance(record, dict):
            raise InstanceFormatError("instance record must be a JSON object")
        for key in ("depot", "customers", "demands", "capacity"):
            if key not in record:
                raise InstanceFormatError(f"missing field {key!r}", field=key)
        depot = record["depot"]
        if not (isinstance(depot, list) and len(depot) == 2 and all(_is_number(v) for v in depot)):
            raise InstanceFormatError("depot must be [x, y]", field="depot")
        customers = record["customers"]
        if not isinstance(customers, list) or not all(
            isinstance(c, list) and len(c) == 2 and all(_is_number(v) for v in c) for c in customers
        ):
            raise InstanceFormatError("customers must be a list of [x, y]", field="customers")
        demands = record["demands"]
        if not isinstance(demands, list) or not all(
            isinstance(d, int) and not isinstance(d, bool) for d in demands
        ):
            raise InstanceFormatError("demands must be a list of integers", field="demands")
        capacity = record["capacity"]
        if not isinstance(capacity, int) or isinstance(capacity, bool):
            raise InstanceFormatError("capacity must be an integer", field="capacity")
        if len(demands) != len(customers):
            raise InstanceFormatError(
                f"{len(demands)} demands for {len(customers)} customers", field="demands"
            )
        try:
            return cls(tuple(depot), np.array(customers, dtype=np.float64), demands, capacity)
        except InstanceFormatError:
            raise
        except InstanceError as exc:
            raise InstanceFormatError(str(exc), field="demands") from exc


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class Subproblem:
    """A set of customers of an instance to be partitioned on its own.

    ``capacity`` and ``max_returns`` play the roles of the vehicle capacity and
    the route budget. ``min_routes`` forces the decoder to open at least that
    many subgraphs (local pair subproblems use 2).
    """

    nodes: tuple[int, ...]
    capacity: int
    max_returns: int
    min_routes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(int(v) for v in self.nodes)))
        if self.max_returns < 1:
            raise InstanceError("max_returns must be >= 1")
        if len(set(self.nodes)) != len(self.nodes):
            raise InstanceError("subproblem nodes must be distinct")

    @classmethod
    def whole(cls, inst: Instance) -> "Subproblem":
        return cls(tuple(range(inst.n)), inst.capacity, inst.n_max)

    def check(self, inst: Instance) -> None:
        if not self.nodes:
            raise InstanceError("subproblem has no customers")
        d = inst.demands[list(self.nodes)]
        if d.max() > self.capacity:
            raise InstanceError("a subproblem demand exceeds its capacity")


# -- generation ---------------------------------------------------------------


@dataclass(frozen=True)
class DistributionSpec:
    kind: str = "uniform"
    seed: int = 0
    n: int = 100
    capacity: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InstanceError(f"unknown distribution kind {self.kind!r}")
        if self.n < 1:
            raise InstanceError("n must be >= 1")
        if self.capacity < 9:
            raise InstanceError("capacity must be at least 9 (the largest sampled demand)")

    def with_seed(self, seed: int) -> "DistributionSpec":
        return DistributionSpec(self.kind, seed, self.n, self.capacity)


GAUSS_STD = 0.07
EXPLOSION_RADIUS = 0.3


def _gaussian_points(rng: np.random.Generator, n: int) -> np.ndarray:
    n_clusters = -(-n // 100)
    centers = rng.uniform(0.2, 0.8, size=(n_clusters, 2))
    which = rng.integers(0, n_clusters, size=n)
    pts = centers[which] + rng.normal(0.0, GAUSS_STD, size=(n, 2))
    return np.clip(pts, 0.0, 1.0)


def _explosion_points(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.random((n, 2))
    center = rng.random(2)
    rel = pts - center
    r = np.linalg.norm(rel, axis=1)
    inside = (r < EXPLOSION_RADIUS) & (r > 0)
    pts[inside] = center + rel[inside] / r[inside, None] * EXPLOSION_RADIUS
    return np.clip(pts, 0.0, 1.0)


def _rotation_points(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.random((n, 2))
    rel = pts - 0.5
    r = np.linalg.norm(rel, axis=1)
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    # theta + a*sin(k*theta + phi) is strictly increasing while a*k < 1
    k = int(rng.integers(1, 4))
    a = rng.uniform(0.2, 0.9) / k
    phi = rng.uniform(0.0, 2 * np.pi)
    theta = theta + a * np.sin(k * theta + phi)
    out = 0.5 + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return np.clip(out, 0.0, 1.0)


_LAYOUTS = {
    "uniform": lambda rng, n: rng.random((n, 2)),
    "gaussian": _gaussian_points,
    "explosion": _explosion_points,
    "rotation": _rotation_points,
}


def generate(spec: DistributionSpec) -> Instance:
    """Sample an instance; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    depot = rng.random(2)
    customers = _LAYOUTS[spec.kind](rng, spec.n)
    demands = rng.integers(1, 10, size=spec.n)
    return Instance((float(depot[0]), float(depot[1])), customers, demands, spec.capacity)


def generate_dataset(spec: DistributionSpec, count: int) -> list[Instance]:
    """``count`` instances with seeds ``spec.seed, spec.seed + 1, ...``."""
    return [generate(spec.with_seed(spec.seed + i)) for i in range(count)]


# -- persistence --------------------------------------------------------------


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict()) + "\n", encoding="utf-8")


def _parse_json(text: str, where: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{where}: invalid JSON ({exc.msg})") from exc


def load_instance(path: str | Path) -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    return Instance.from_dict(_parse_json(text, str(path)))


def save_dataset(instances: Iterable[Instance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict()) + "\n")


def iter_dataset(path: str | Path) -> Iterator[Instance]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield Instance.from_dict(_parse_json(line, f"{path}:{lineno}"))


def load_dataset(path: str | Path) -> list[Instance]:
    return list(iter_dataset(path))
