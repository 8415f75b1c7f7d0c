"""Partition solutions, route plans, costs and feasibility checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .instance import Instance


class SolutionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSolution:
    """Ordered list of customer subgraphs; the depot is implicit in every one.

    Each subgraph is stored as a sorted tuple. The list order is meaningful
    (it defines which subgraphs are neighbours), the order inside a subgraph
    is not. Empty subgraphs are rejected.
    """

    subgraphs: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subs = tuple(tuple(sorted(int(v) for v in s)) for s in self.subgraphs)
        if any(len(s) == 0 for s in subs):
            raise ValueError("empty subgraphs are not allowed")
        object.__setattr__(self, "subgraphs", subs)

    def __len__(self) -> int:
        return len(self.subgraphs)

    def __iter__(self):
        return iter(self.subgraphs)

    def __getitem__(self, i):
        return self.subgraphs[i]

    def to_dict(self) -> dict:
        return {"subgraphs": [list(s) for s in self.subgraphs]}

    @classmethod
    def from_dict(cls, record: dict) -> "PartitionSolution":
        subs = record.get("subgraphs") if isinstance(record, dict) else None
        if not isinstance(subs, list) or not all(
            isinstance(s, list) and all(isinstance(v, int) for v in s) for s in subs
        ):
            raise SolutionFormatError("'subgraphs' must be a list of integer lists")
        try:
            return cls(subs)
        except ValueError as exc:
            raise SolutionFormatError(str(exc)) from exc


@dataclass(frozen=True)
class RoutePlan:
    """Depot-anchored tours; each tour starts and ends at the depot implicitly."""

    tours: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "tours", tuple(tuple(int(v) for v in t) for t in self.tours))

    def __len__(self) -> int:
        return len(self.tours)

    def to_dict(self) -> dict:
        return {"tours": [list(t) for t in self.tours]}

    @classmethod
    def from_dict(cls, record: dict) -> "RoutePlan":
        tours = record.get("tours") if isinstance(record, dict) else None
        if not isinstance(tours, list) or not all(
            isinstance(t, list) and all(isinstance(v, int) for v in t) for t in tours
        ):
            raise SolutionFormatError("'tours' must be a list of integer lists")
        return cls(tours)


def _check_indices(nodes: Iterable[int], inst: Instance) -> None:
    for v in nodes:
        if not 0 <= v < inst.n:
            raise IndexError(f"customer index {v} out of range for {inst.n} customers")


def tour_cost(tour: Sequence[int], inst: Instance) -> float:
    """Length of depot -> tour[0] -> ... -> tour[-1] -> depot."""
    if len(tour) == 0:
        return 0.0
    _check_indices(tour, inst)
    d = inst.dist
    prev = 0
    total = 0.0
    for v in tour:
        total += d[prev, v + 1]
        prev = v + 1
    return float(total + d[prev, 0])


def plan_cost(plan: RoutePlan, inst: Instance) -> float:
    return math.fsum(tour_cost(t, inst) for t in plan.tours)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "feasible" if self.ok else "; ".join(self.violations)


def _validate_groups(groups: Sequence[Sequence[int]], inst: Instance, what: str) -> ValidationReport:
    report = ValidationReport()
    seen: dict[int, int] = {}
    for gi, group in enumerate(groups):
        if len(group) == 0:
            report.violations.append(f"empty {what} {gi}")
        demand = 0
        for v in group:
            if not 0 <= v < inst.n:
                report.violations.append(f"{what} {gi}: customer index {v} out of range")
                continue
            if v in seen:
                report.violations.append(
                    f"disjointness: customer {v} appears in {what}s {seen[v]} and {gi}"
                    if seen[v] != gi
                    else f"disjointness: customer {v} repeated in {what} {gi}"
                )
            else:
                seen[v] = gi
            demand += int(inst.demands[v])
        if demand > inst.capacity:
            report.violations.append(
                f"capacity: {what} {gi} has demand {demand} > {inst.capacity}"
            )
    missing = sorted(set(range(inst.n)) - set(seen))
    if missing:
        head = ", ".join(map(str, missing[:10])) + (" ..." if len(missing) > 10 else "")
        report.violations.append(f"coverage: {len(missing)} customers unassigned ({head})")
    if not 1 <= len(groups) <= inst.n_max:
        report.violations.append(f"count: {len(groups)} {what}s, allowed 1..{inst.n_max}")
    return report


def validate_partition(c: PartitionSolution, inst: Instance) -> ValidationReport:
    """Check coverage, disjointness, per-subgraph demand and subgraph count."""
    return _validate_groups(c.subgraphs, inst, "subgraph")


def validate_plan(plan: RoutePlan, inst: Instance) -> ValidationReport:
    return _validate_groups(plan.tours, inst, "tour")


def partition_of_plan(plan: RoutePlan) -> PartitionSolution:
    return PartitionSolution(plan.tours)


def save_plan(plan: RoutePlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict()) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> RoutePlan:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SolutionFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    return RoutePlan.from_dict(record)


def save_partition(c: PartitionSolution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(c.to_dict()) + "\n", encoding="utf-8")


def load_partition(path: str | Path) -> PartitionSolution:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SolutionFormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    return PartitionSolution.from_dict(record)
