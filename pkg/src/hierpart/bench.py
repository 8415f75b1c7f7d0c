"""Dataset evaluation, K sweeps and ablation presets."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .hierarchy import SolveOptions, SolveResult, solve
from .instance import Instance, load_dataset
from .policy import EdgeScorePolicy, default_policy
from .routing import PermSolverConfig, Router
from .solution import plan_cost, validate_partition, validate_plan

METRIC_COLUMNS = ("instance_id", "cost", "time_s", "n_routes")


class ValidationFailure(RuntimeError):
    """A solver stage produced an infeasible solution."""


@dataclass
class SolverConfig:
    global_policy: EdgeScorePolicy = field(default_factory=default_policy)
    local_policy: EdgeScorePolicy = field(default_factory=default_policy)
    K: int = 0
    mode: str = "greedy"
    beam: int = 16
    accept: str = "if_better"
    restart: bool = False
    seed: int = 0
    reorder: bool = True
    perm_cfg: PermSolverConfig = field(default_factory=PermSolverConfig)
    label: str = "hierpart"

    def options(self, index: int) -> SolveOptions:
        # per-instance seeds keep sampled runs independent of evaluation order
        return SolveOptions(mode=self.mode, beam_width=self.beam, accept=self.accept,
                            restart=self.restart, reorder=self.reorder, seed=self.seed + index)


ABLATIONS = {
    "glob.": dict(K=0, restart=False),
    "glob.+subp.": dict(K=0, restart=True),
    "glob.+loc.": dict(restart=False),
    "glob.+loc.+subp.": dict(restart=True),
}


def ablation(cfg: SolverConfig, name: str, K: int = 5) -> SolverConfig:
    """The solver configuration for one ablation mode; local modes use ``K`` levels."""
    kw = dict(ABLATIONS[name])
    kw.setdefault("K", K)
    return replace(cfg, label=name, **kw)


@dataclass
class Row:
    instance_id: int
    cost: float
    time_s: float
    n_routes: int


@dataclass
class EvalReport:
    label: str
    rows: list[Row]
    results: list[SolveResult] = field(default_factory=list, repr=False)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.rows])

    @property
    def avg_cost(self) -> float:
        return float(self.costs.mean())

    @property
    def std_cost(self) -> float:
        return float(self.costs.std())

    @property
    def avg_time(self) -> float:
        return float(np.mean([r.time_s for r in self.rows]))

    def summary(self) -> str:
        return (f"{self.label}: avg {self.avg_cost:.4f}  std {self.std_cost:.4f}  "
                f"time {self.avg_time:.3f}s  ({len(self.rows)} instances)")


def solve_checked(inst: Instance, cfg: SolverConfig, index: int = 0) -> SolveResult:
    res = solve(inst, cfg.global_policy, cfg.local_policy, cfg.K, cfg.perm_cfg,
                cfg.options(index), router=Router(inst, cfg.perm_cfg))
    for what, rep in (("partition", validate_partition(res.partition, inst)),
                      ("plan", validate_plan(res.plan, inst))):
        if not rep.ok:
            raise ValidationFailure(f"instance {index}: infeasible {what}: {rep}")
    return res


def evaluate(dataset: Sequence[Instance] | str | Path, cfg: SolverConfig,
             keep_results: bool = False) -> EvalReport:
    """Solve every instance; time is wall clock around the solve only."""
    instances = load_dataset(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    if not instances:
        raise ValueError("empty dataset")
    rows, results = [], []
    for i, inst in enumerate(instances):
        t0 = time.perf_counter()
        res = solve_checked(inst, cfg, i)
        dt = time.perf_counter() - t0
        rows.append(Row(i, plan_cost(res.plan, inst), dt, len(res.plan)))
        if keep_results:
            results.append(res)
    return EvalReport(cfg.label, rows, results)


def write_metrics(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in report.rows:
            w.writerow([r.instance_id, repr(r.cost), f"{r.time_s:.2f}", r.n_routes])


def read_metrics(path: str | Path) -> list[Row]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [Row(int(r["instance_id"]), float(r["cost"]), float(r["time_s"]), int(r["n_routes"]))
                for r in csv.DictReader(fh)]


def k_sweep(dataset: Sequence[Instance] | str | Path, cfg: SolverConfig,
            K_list: Sequence[int]) -> list[EvalReport]:
    """One report per K on the same instances and seeds."""
    instances = load_dataset(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    return [evaluate(instances, replace(cfg, K=k, label=f"K={k}")) for k in K_list]


def write_k_sweep(K_list: Sequence[int], reports: Sequence[EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("K", "avg_cost", "std_cost", "avg_time_s"))
        for k, r in zip(K_list, reports):
            w.writerow([k, repr(r.avg_cost), repr(r.std_cost), f"{r.avg_time:.2f}"])
