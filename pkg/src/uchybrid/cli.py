"""Command-line entry point: ``uchybrid <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import AGENTS, ExperimentConfig
from .environment import evaluate_schedule
from .errors import ArchitectureMismatch, ConfigError, InfeasibleSchedule, InvalidArgument, TrainingDiverged
from .experiments import (PF_AGENT, AgentResult, evaluate_record, load_policy, load_records, perfect_foresight_record,
                          result_record, run_agent, run_hybrid_day, summarise, write_table)
from .mip import NO_SOLUTION
from .rl import ppo_train
from .synthetic import write_days
from .system import Schedule, load_day

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NO_INCUMBENT = 0, 2, 3, 4

log = logging.getLogger("uchybrid")


class BudgetExhausted(Exception):
    pass


class InfeasibleModel(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _select_days(cfg: ExperimentConfig, day_args):
    if day_args:
        cfg = cfg.override(day_files=list(day_args))
    return cfg, cfg.days()


def cmd_generate_days(cfg, args) -> int:
    spec = cfg.synthetic_spec()
    n = args.n_days or cfg.n_days
    seed = cfg.day_seed if args.day_seed is None else args.day_seed
    paths = write_days(spec, n, seed, args.out_dir)
    _write_json(Path(args.out_dir) / "days_manifest.json",
                {"spec": spec.to_dict(), "n_days": n, "day_seed": seed, "files": [p.name for p in paths], **cfg.stamp()})
    print(f"wrote {len(paths)} day files to {args.out_dir}")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    tc = cfg.train_config()
    if args.iterations:
        tc.iterations = args.iterations
    days = cfg.train_days()
    res = ppo_train(days, tc, progress=lambda r: log.info("iter %d mean cost %.1f", r.iteration, r.mean_cost))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint or out / Path(cfg.checkpoint).name)
    res.params.save(ckpt)
    res.write_log(out / "training_log.csv")
    _write_json(out / "train_config.json", {"train": tc.to_dict(), **cfg.stamp()})
    print(f"saved policy to {ckpt}; final mean cost {res.curve[-1].mean_cost:.1f}")
    return EXIT_OK


def _check_incumbent(res: AgentResult, out: Path):
    if res.schedule is None:
        if res.solve is not None and res.solve.termination == NO_SOLUTION:
            # diagnostic dump: the solve report and the model in LP format
            out.mkdir(parents=True, exist_ok=True)
            res.solve.save(out / f"{res.day}_{res.agent}_infeasible.json")
            model = (res.extra or {}).get("model")
            if model is not None:
                (out / f"{res.day}_{res.agent}_infeasible.lp").write_text(model.to_lp_text())
            raise InfeasibleModel(f"{res.agent} on {res.day}: model is infeasible; diagnostics written to {out}")
        raise BudgetExhausted(f"{res.agent} on {res.day}: budget exhausted without an incumbent")


def cmd_solve(cfg, args) -> int:
    agent = args.agent or cfg.agent
    cfg = cfg.override(agent=None if agent == PF_AGENT else agent, checkpoint=args.checkpoint)
    cfg, days = _select_days(cfg, args.day)
    out = Path(args.out_dir)
    params = None
    for inst in days:
        if agent == PF_AGENT:
            _write_json(out / f"{inst.name}_{agent}.json", perfect_foresight_record(cfg, inst))
            continue
        if agent.startswith("rl") or agent == "hybrid-rl":
            params = params or load_policy(cfg, inst)
        res = run_agent(cfg, inst, agent, params)
        _check_incumbent(res, out)
        out.mkdir(parents=True, exist_ok=True)
        res.schedule.to_csv(out / f"{inst.name}_{agent}_schedule.csv")
        rec = result_record(cfg, res) if args.no_eval else evaluate_record(cfg, inst, res)
        _write_json(out / f"{inst.name}_{agent}.json", rec)
        if res.solve is not None:
            res.solve.save(out / f"{inst.name}_{agent}_solve.json")
        cost = rec.get("expected_cost")
        print(f"{inst.name} {agent}: wall {res.wall_time:.2f}s" + ("" if cost is None else f", expected cost {cost:.2f}"))
    return EXIT_OK


def cmd_evaluate(cfg, args) -> int:
    demand, wind = load_day(args.day)
    inst = cfg.instance(demand, wind, name=Path(args.day).stem)
    s = Schedule.from_csv(args.schedule, inst.init_status)
    ev = evaluate_schedule(s, inst, args.scenarios or cfg.R_n, cfg.seed)
    ev.config.update(cfg.stamp())
    out = Path(args.out_dir) / f"{inst.name}_evaluation.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    ev.save(out)
    print(f"expected cost {ev.expected_cost:.2f} +/- {ev.standard_error:.2f}")
    return EXIT_OK


def cmd_hybrid(cfg, args) -> int:
    cfg = cfg.override(K=args.k, checkpoint=args.checkpoint)
    cfg, days = _select_days(cfg, args.day)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for inst in days:
        rep = run_hybrid_day(cfg, inst, args.method)
        tag = f"{inst.name}_hybrid-{args.method}"
        rep.save(out / f"{tag}_report.json")
        rep.write_csv(out / f"{tag}.csv")
        rep.selected_schedule.to_csv(out / f"{tag}_schedule.csv")
        ev = rep.evaluations[rep.selected]
        _write_json(out / f"{tag}.json", {"kind": "solve", "agent": f"hybrid-{args.method}", "day": inst.name,
                                         "expected_cost": ev.expected_cost, "standard_error": ev.standard_error,
                                         "mip_gap": rep.solves[rep.selected].mip_gap,
                                         "wall_time": sum(s.wall_time for s in rep.solves), **cfg.stamp()})
        print(f"{inst.name} hybrid-{args.method}: selected {rep.selected}, cost {rep.selected_cost:.2f}")
    return EXIT_OK


def cmd_report(cfg, args) -> int:
    summary = summarise(load_records(args.results))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for key in ("per_day", "aggregate", "runtime"):
        write_table(summary[key], out / f"summary_{key}.csv")
    print(f"config {summary['config_hash']}: {summary['n_generators']} units, "
          f"demand scale factor {summary['demand_scale_factor']}")
    for row in summary["aggregate"]:
        norm = row["mean_normalised"]
        print(f"{row['agent']:>16}  days {row['n_days']:3d}  mean cost {row['mean_cost']:.2f}"
              + ("" if norm is None else f"  vs perfect foresight {norm:.4f}"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the copy on
    # each subparser suppresses its defaults so it cannot clobber earlier values
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="max concurrent solver instances")
    common.add_argument("--node-budget", type=int, help="branch-and-bound node limit (negative: unlimited)")
    common.add_argument("--time-budget-s", type=float, help="branch-and-bound wall-clock limit")
    common.add_argument("--out-dir", help="output directory (default: results)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uchybrid", description="Unit commitment under wind and demand uncertainty.",
                                parents=[common])
    p.set_defaults(config=None, seed=None, workers=None, node_budget=None, time_budget_s=None,
                   out_dir="results", verbose=False)
    p.add_argument("--version", action="version", version=f"uchybrid {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-days", parents=[common], help="write synthetic demand/wind day files")
    g.add_argument("--n-days", type=int)
    g.add_argument("--day-seed", type=int)
    g.set_defaults(func=cmd_generate_days)

    t = sub.add_parser("train", parents=[common], help="train the policy with PPO")
    t.add_argument("--iterations", type=int)
    t.add_argument("--checkpoint", help="where to write the policy (default: <out-dir>/policy.json)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", parents=[common], help="schedule days with one agent")
    s.add_argument("--agent", choices=AGENTS + (PF_AGENT,))
    s.add_argument("--day", nargs="*", help="day CSV files (default: configured days)")
    s.add_argument("--checkpoint", help="policy checkpoint for RL agents")
    s.add_argument("--no-eval", action="store_true", help="skip Monte Carlo evaluation")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", parents=[common], help="Monte Carlo cost of a schedule")
    e.add_argument("--day", required=True)
    e.add_argument("--schedule", required=True, help="schedule CSV (G rows, T columns)")
    e.add_argument("--scenarios", type=int, help="number of evaluation scenarios (default: R_n)")
    e.set_defaults(func=cmd_evaluate)

    h = sub.add_parser("hybrid", parents=[common], help="warm-started concurrent solves")
    h.add_argument("--method", choices=("vanilla", "rl", "rand"), default="rl")
    h.add_argument("--k", type=int, help="number of warm starts")
    h.add_argument("--day", nargs="*")
    h.add_argument("--checkpoint")
    h.set_defaults(func=cmd_hybrid)

    r = sub.add_parser("report", parents=[common], help="summary tables from result files")
    r.add_argument("--results", required=True, help="directory of result JSON files")
    r.set_defaults(func=cmd_report)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    over = {"seed": args.seed, "workers": args.workers, "time_budget_s": args.time_budget_s}
    cfg = cfg.override(**over)
    if args.node_budget is not None:
        # override() skips None, which here means unlimited
        cfg = dataclasses.replace(cfg, node_budget=args.node_budget if args.node_budget >= 0 else None)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (ConfigError, InvalidArgument, ArchitectureMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleSchedule, InfeasibleModel, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, TrainingDiverged) and exc.snapshot is not None:
            _write_json(Path(args.out_dir) / "diverged_snapshot.json", exc.snapshot)
        return EXIT_INFEASIBLE
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_INCUMBENT


if __name__ == "__main__":
    sys.exit(main())
