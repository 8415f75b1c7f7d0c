"""Command-line interface.

Exit status: 0 on success, 2 when an input or a produced solution fails
validation, 1 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import (
    SolverConfig,
    ValidationFailure,
    evaluate,
    k_sweep,
    solve_checked,
    write_k_sweep,
    write_metrics,
)
from .hierarchy import dump_traces
from .instance import KINDS, DistributionSpec, InstanceError, generate_dataset, load_dataset, load_instance, save_dataset
from .plotting import figure_path, plot_curves, plot_eval, plot_k_sweep, plot_routes
from .policy import EdgeScorePolicy, PolicyError, default_policy
from .render import render_svg
from .rl import RlConfig, train_rl
from .sl import SlConfig, train_sl
from .solution import SolutionFormatError, load_plan, plan_cost, save_partition, save_plan, validate_plan

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def _policy(path: str | None) -> EdgeScorePolicy:
    return EdgeScorePolicy.load(path) if path else default_policy()


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--global-ckpt", help="global policy checkpoint (default: built-in weights)")
    p.add_argument("--local-ckpt", help="local policy checkpoint (default: built-in weights)")
    p.add_argument("--K", type=int, default=3, help="local refinement levels")
    p.add_argument("--mode", choices=("greedy", "sample", "beam"), default="greedy",
                   help="decoding strategy")
    p.add_argument("--beam", type=int, default=16, help="beam width for --mode beam")
    p.add_argument("--accept", choices=("always", "if_better"), default="if_better",
                   help="when a repartitioned pair replaces the old one")
    p.add_argument("--restart", choices=("on", "off"), default="off",
                   help="re-decode the residual subproblem after every subgraph")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")


def _solver_config(a: argparse.Namespace) -> SolverConfig:
    return SolverConfig(_policy(a.global_ckpt), _policy(a.local_ckpt), K=a.K, mode=a.mode,
                        beam=a.beam, accept=a.accept, restart=a.restart == "on", seed=a.seed)


def cmd_gen(a) -> int:
    spec = DistributionSpec(a.kind, a.seed, a.n, a.capacity)
    save_dataset(generate_dataset(spec, a.count), a.out)
    print(f"wrote {a.count} instances to {a.out}")
    return EXIT_OK


def _load_one(path: str, index: int):
    text = Path(path).read_text(encoding="utf-8").strip()
    if "\n" in text:
        return load_dataset(path)[index]
    return load_instance(path)


def cmd_solve(a) -> int:
    inst = _load_one(a.instance, a.index)
    res = solve_checked(inst, _solver_config(a))
    save_plan(res.plan, a.out)
    if a.partition_out:
        save_partition(res.partition, a.partition_out)
    if a.trace_out:
        dump_traces(res.traces, a.trace_out)
    if a.svg:
        render_svg(inst, res.plan, a.svg)
    cost = plan_cost(res.plan, inst)
    plot_routes(inst.depot, inst.customers, res.plan.tours, f"cost {cost:.4f}",
                Path(a.out).with_suffix(".png"))
    print(f"cost {cost:.6f}  routes {len(res.plan)}  levels {res.level_costs}")
    return EXIT_OK


def cmd_eval(a) -> int:
    cfg = _solver_config(a)
    report = evaluate(a.dataset, cfg)
    write_metrics(report, a.out)
    # timing stays out of the figure so it is reproducible
    plot_eval(report.costs, f"{report.label}: avg {report.avg_cost:.4f}  std {report.std_cost:.4f}",
              figure_path(a.out))
    print(report.summary())
    return EXIT_OK


def cmd_k_sweep(a) -> int:
    ks = [int(k) for k in a.K_list.split(",")]
    reports = k_sweep(a.dataset, _solver_config(a), ks)
    write_k_sweep(ks, reports, a.out)
    plot_k_sweep(ks, [r.avg_cost for r in reports], [r.std_cost for r in reports],
                 [r.avg_time for r in reports], figure_path(a.out))
    for r in reports:
        print(r.summary())
    return EXIT_OK


def cmd_train_rl(a) -> int:
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = RlConfig(samples_per_instance=a.samples, lambda_entropy_global=a.lambda_g,
                   lambda_entropy_local=a.lambda_l, learning_rate=a.lr, iterations=a.iterations,
                   instances_per_iter=a.instances_per_iter, K_train=a.K_train, seed=a.seed,
                   eval_every=a.eval_every, checkpoint_every=a.checkpoint_every,
                   checkpoint_dir=str(out / "checkpoints") if a.checkpoint_every else None)
    spec = DistributionSpec(a.kind, a.seed, a.n, a.capacity)
    g, l, log = train_rl(cfg, spec, log_path=out / "rl_log.csv")
    g.save(out / "global.json")
    l.save(out / "local.json")
    if log:
        plot_curves([r["iter"] for r in log],
                    {"mean reward": [r["mean_reward"] for r in log],
                     "grad norm": [r["grad_norm"] for r in log],
                     "eval cost": [r["eval_cost"] if r["eval_cost"] != "" else float("nan")
                                   for r in log]},
                    "iteration", out / "rl_log.png")
    print(f"wrote {out / 'global.json'} and {out / 'local.json'}")
    return EXIT_OK


def cmd_train_sl(a) -> int:
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SlConfig(beam_size=a.beam, rounds=a.rounds, instances_per_round=a.instances,
                   lambda_g=a.lambda_g, lambda_l=a.lambda_l, learning_rate=a.lr,
                   K_label=a.K_label, seed=a.seed, steps_per_round=a.steps_per_round,
                   batch_size=a.batch_size, bootstrap_steps=a.bootstrap_steps)
    spec = DistributionSpec(a.kind, a.seed, a.n, a.capacity)
    g, l, log = train_sl(cfg, spec, _policy(a.global_ckpt) if a.global_ckpt else None,
                         _policy(a.local_ckpt) if a.local_ckpt else None,
                         log_path=out / "sl_log.csv",
                         label_cache=out / "labels.jsonl" if a.cache_labels else None)
    g.save(out / "global.json")
    l.save(out / "local.json")
    if log:
        plot_curves([r["round"] for r in log],
                    {"mean label cost": [r["mean_label_cost"] for r in log],
                     "loss": [r["loss"] for r in log],
                     "step accuracy": [r["step_accuracy"] for r in log]},
                    "round", out / "sl_log.png")
    print(f"wrote {out / 'global.json'} and {out / 'local.json'}")
    return EXIT_OK


def cmd_render(a) -> int:
    inst = _load_one(a.instance, a.index)
    plan = load_plan(a.plan)
    rep = validate_plan(plan, inst)
    if not rep.ok:
        raise ValidationFailure(f"infeasible plan: {rep}")
    render_svg(inst, plan, a.out)
    print(f"wrote {a.out}")
    return EXIT_OK


class _Formatter(argparse.HelpFormatter):
    """Appends the default to every optional argument that has one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default in (None, argparse.SUPPRESS) or action.required:
            return text
        if not action.option_strings or action.nargs == 0:
            return text
        return f"{text} (default: %(default)s)".lstrip()


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    p = argparse.ArgumentParser(prog="hierpart", description=__doc__.splitlines()[0],
                                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset (JSON lines)", formatter_class=fmt)
    g.add_argument("--kind", choices=KINDS, default="uniform", help="customer distribution")
    g.add_argument("--n", type=int, default=100, help="customers per instance")
    g.add_argument("--capacity", type=int, default=50, help="vehicle capacity")
    g.add_argument("--count", type=int, default=16, help="number of instances")
    g.add_argument("--seed", type=int, default=0, help="instance i uses seed + i")
    g.add_argument("--out", required=True, help="dataset path (JSON lines)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance", formatter_class=fmt)
    s.add_argument("--instance", required=True, help="instance file or dataset")
    s.add_argument("--index", type=int, default=0, help="line to use when given a dataset")
    _solver_args(s)
    s.add_argument("--out", required=True, help="route plan JSON; a PNG is written alongside")
    s.add_argument("--partition-out", help="partition JSON")
    s.add_argument("--trace-out", help="level traces as JSON lines")
    s.add_argument("--svg", help="SVG rendering of the plan")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="evaluate a dataset", formatter_class=fmt)
    e.add_argument("--dataset", required=True, help="dataset path (JSON lines)")
    _solver_args(e)
    e.add_argument("--out", required=True, help="metrics CSV; a PNG is written alongside")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("k-sweep", help="evaluate a dataset for several K", formatter_class=fmt)
    k.add_argument("--dataset", required=True, help="dataset path (JSON lines)")
    _solver_args(k)
    k.add_argument("--K-list", default="0,1,2,3,4,5", help="comma-separated K values")
    k.add_argument("--out", required=True, help="summary CSV; a PNG is written alongside")
    k.set_defaults(func=cmd_k_sweep)

    def dist_args(q):
        q.add_argument("--kind", choices=KINDS, default="uniform", help="training distribution")
        q.add_argument("--n", type=int, default=50, help="customers per instance")
        q.add_argument("--capacity", type=int, default=40, help="vehicle capacity")
        q.add_argument("--seed", type=int, default=0, help="training seed")
        q.add_argument("--out-dir", required=True, help="checkpoints, log CSV and plot")

    r = sub.add_parser("train-rl", help="REINFORCE training", formatter_class=fmt)
    dist_args(r)
    d = RlConfig()
    r.add_argument("--iterations", type=int, default=d.iterations, help="gradient steps")
    r.add_argument("--samples", type=int, default=d.samples_per_instance,
                   help="rollouts per instance")
    r.add_argument("--lambda-g", type=float, default=d.lambda_entropy_global,
                   help="entropy weight, global policy")
    r.add_argument("--lambda-l", type=float, default=d.lambda_entropy_local,
                   help="entropy weight, local policy")
    r.add_argument("--lr", type=float, default=d.learning_rate, help="step size")
    r.add_argument("--instances-per-iter", type=int, default=d.instances_per_iter,
                   help="instances per gradient step")
    r.add_argument("--K-train", type=int, default=d.K_train, help="local levels per rollout")
    r.add_argument("--eval-every", type=int, default=0, help="held-out evaluation period (0: off)")
    r.add_argument("--checkpoint-every", type=int, default=0, help="checkpoint period (0: off)")
    r.set_defaults(func=cmd_train_rl)

    t = sub.add_parser("train-sl", help="self-imitation training", formatter_class=fmt)
    dist_args(t)
    d2 = SlConfig()
    t.add_argument("--rounds", type=int, default=d2.rounds, help="label/fit rounds")
    t.add_argument("--instances", type=int, default=d2.instances_per_round,
                   help="labelled instances per round")
    t.add_argument("--beam", type=int, default=d2.beam_size, help="beam width for labels")
    t.add_argument("--K-label", type=int, default=d2.K_label, help="local levels for labels")
    t.add_argument("--lambda-g", type=float, default=d2.lambda_g, help="L2 weight, global policy")
    t.add_argument("--lambda-l", type=float, default=d2.lambda_l, help="L2 weight, local policy")
    t.add_argument("--lr", type=float, default=d2.learning_rate, help="step size")
    t.add_argument("--steps-per-round", type=int, default=d2.steps_per_round,
                   help="gradient steps per round")
    t.add_argument("--batch-size", type=int, default=d2.batch_size, help="labels per gradient step")
    t.add_argument("--bootstrap-steps", type=int, default=d2.bootstrap_steps,
                   help="fit steps on sweep labels before round 1")
    t.add_argument("--global-ckpt", help="initial global policy (default: zero weights)")
    t.add_argument("--local-ckpt", help="initial local policy (default: zero weights)")
    t.add_argument("--cache-labels", action="store_true", help="write labels.jsonl")
    t.set_defaults(func=cmd_train_sl)

    v = sub.add_parser("render", help="render a route plan as SVG", formatter_class=fmt)
    v.add_argument("--instance", required=True, help="instance file or dataset")
    v.add_argument("--index", type=int, default=0, help="line to use when given a dataset")
    v.add_argument("--plan", required=True, help="route plan JSON")
    v.add_argument("--out", required=True, help="SVG path")
    v.set_defaults(func=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationFailure, InstanceError, SolutionFormatError, PolicyError, ValueError,
            IndexError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
