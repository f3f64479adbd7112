"""Per-day experiment pipelines shared by the command line and the tests."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .environment import evaluate_schedule
from .errors import ConfigError
from .forecast import build_scenario_tree, ndfe_std
from .hybrid import WarmStartSet, perfect_foresight_cost, rand_warm_starts, rl_warm_starts, run_hybrid
from .mip import SolveReport, branch_and_bound, build_dmip, build_smip, reserve_from_std
from .rl import PolicyParams, architecture_for, rl_la_solve, rl_mf_solve
from .system import ProblemInstance, Schedule

PF_AGENT = "perfect-foresight"


@dataclass
class AgentResult:
    agent: str
    day: str
    schedule: Schedule | None
    wall_time: float
    solve: SolveReport | None = None
    extra: dict | None = None


def smip_model(cfg: ExperimentConfig, inst: ProblemInstance):
    return build_smip(inst, build_scenario_tree(inst, cfg.quantiles, cfg.tree_samples, cfg.seed))


def dmip_model(cfg: ExperimentConfig, inst: ProblemInstance):
    sigma = ndfe_std(inst, cfg.tree_samples, cfg.seed)
    return build_dmip(inst, reserve_from_std(sigma, cfg.reserve_multiplier))


def load_policy(cfg: ExperimentConfig, inst: ProblemInstance, path=None) -> PolicyParams:
    path = Path(path or cfg.checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"policy checkpoint {path} not found; run `uchybrid train` first")
    return PolicyParams.load(path, expect=architecture_for(inst, cfg.train_config().hidden))


def run_agent(cfg: ExperimentConfig, inst: ProblemInstance, agent: str, params: PolicyParams | None = None) -> AgentResult:
    """Produce one day's schedule with the named agent."""
    t0 = time.perf_counter()
    if agent in ("smip", "dmip"):
        model = smip_model(cfg, inst) if agent == "smip" else dmip_model(cfg, inst)
        rep = branch_and_bound(model, budgets=cfg.budgets(), seed=cfg.seed)
        return AgentResult(agent, inst.name, rep.incumbent, time.perf_counter() - t0, rep, {"model": model})
    if agent in ("rl-mf", "rl-la"):
        params = params or load_policy(cfg, inst)
        t0 = time.perf_counter()
        s = rl_mf_solve(params, inst) if agent == "rl-mf" else \
            rl_la_solve(params, inst, cfg.rho, cfg.la_scenarios, cfg.seed)
        return AgentResult(agent, inst.name, s, time.perf_counter() - t0)
    if agent.startswith("hybrid-"):
        hy = run_hybrid_day(cfg, inst, agent.split("-", 1)[1], params)
        return AgentResult(agent, inst.name, hy.selected_schedule, time.perf_counter() - t0,
                           hy.solves[hy.selected], {"hybrid": hy})
    raise ConfigError(f"unknown agent {agent!r}")


def warm_start_set(cfg: ExperimentConfig, inst: ProblemInstance, method: str, params=None) -> WarmStartSet:
    if method == "vanilla":
        return WarmStartSet.vanilla()
    if method == "rand":
        return rand_warm_starts(inst, cfg.K, cfg.seed)
    if method == "rl":
        return rl_warm_starts(params or load_policy(cfg, inst), inst, cfg.K, cfg.seed, str(cfg.checkpoint))
    raise ConfigError(f"unknown warm-start method {method!r}")


def run_hybrid_day(cfg: ExperimentConfig, inst: ProblemInstance, method: str, params=None):
    ws = warm_start_set(cfg, inst, method, params)
    rep = run_hybrid(inst, smip_model(cfg, inst), ws, cfg.budgets(), cfg.R_n, cfg.seed, cfg.workers)
    rep.config.update(cfg.stamp())
    return rep


def result_record(cfg: ExperimentConfig, res: AgentResult) -> dict:
    """Flat JSON-ready record for one (agent, day) result."""
    rec = {"kind": "solve", "agent": res.agent, "day": res.day, "wall_time": res.wall_time, **cfg.stamp()}
    if res.solve is not None:
        rec.update(mip_gap=res.solve.mip_gap if np.isfinite(res.solve.mip_gap) else None,
                   nodes_explored=res.solve.nodes_explored, termination=res.solve.termination,
                   ub=res.solve.ub if np.isfinite(res.solve.ub) else None)
    return rec


def evaluate_record(cfg: ExperimentConfig, inst: ProblemInstance, res: AgentResult) -> dict:
    rec = result_record(cfg, res)
    if res.schedule is not None:
        ev = evaluate_schedule(res.schedule, inst, cfg.R_n, cfg.seed)
        rec.update(expected_cost=ev.expected_cost, standard_error=ev.standard_error,
                   shed_energy=ev.shed_energy, curtailed_energy=ev.curtailed_energy)
    return rec


def perfect_foresight_record(cfg: ExperimentConfig, inst: ProblemInstance) -> dict:
    t0 = time.perf_counter()
    pf = perfect_foresight_cost(inst, cfg.budgets(), cfg.pf_subsample, cfg.seed)
    return {"kind": "solve", "agent": PF_AGENT, "day": inst.name, "wall_time": time.perf_counter() - t0,
            "expected_cost": pf.mean, "standard_error": pf.standard_error, "lower_mean": pf.lower_mean,
            "exact": pf.exact, **cfg.stamp()}


# -- reporting ---------------------------------------------------------------

class MixedConfigError(ConfigError):
    pass


def load_records(result_dir) -> list[dict]:
    recs = []
    for p in sorted(Path(result_dir).rglob("*.json")):
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(d, dict) and d.get("kind") == "solve":
            recs.append(d)
    return recs


def summarise(records: list[dict]) -> dict:
    """Cost tables normalised by perfect foresight, plus runtime distributions.

    Refuses to mix results produced under different configurations.
    """
    if not records:
        raise ConfigError("no result records found")
    hashes = {r.get("config_hash") for r in records}
    if len(hashes) > 1:
        raise MixedConfigError(f"results come from {len(hashes)} different configurations: {sorted(map(str, hashes))}")
    pf = {r["day"]: r["expected_cost"] for r in records if r["agent"] == PF_AGENT}
    # one hash means one fleet size and demand scaling; label the tables with them
    fleet = {k: records[0].get(k) for k in ("n_generators", "demand_scale_factor")}
    per_day = []
    for r in records:
        if "expected_cost" not in r:
            continue
        base = pf.get(r["day"])
        per_day.append({"agent": r["agent"], "day": r["day"], "expected_cost": r["expected_cost"],
                        "normalised_cost": r["expected_cost"] / base if base else None,
                        "wall_time": r.get("wall_time"), "mip_gap": r.get("mip_gap")})
    per_day.sort(key=lambda x: (x["agent"], x["day"]))
    agents = sorted({x["agent"] for x in per_day})
    aggregate, runtime = [], []
    for a in agents:
        rows = [x for x in per_day if x["agent"] == a]
        c = np.array([x["expected_cost"] for x in rows])
        n = [x["normalised_cost"] for x in rows if x["normalised_cost"] is not None]
        aggregate.append({"agent": a, "n_generators": fleet.get("n_generators"),
                          "demand_scale_factor": fleet.get("demand_scale_factor"), "n_days": len(rows), "sum_cost": float(c.sum()), "mean_cost": float(c.mean()),
                          "median_cost": float(np.median(c)),
                          "mean_normalised": float(np.mean(n)) if n else None,
                          "median_normalised": float(np.median(n)) if n else None})
        w = np.array([x["wall_time"] for x in rows if x["wall_time"] is not None])
        if len(w):
            runtime.append({"agent": a, "min_s": float(w.min()), "median_s": float(np.median(w)),
                            "max_s": float(w.max()), "mean_s": float(w.mean())})
    return {"per_day": per_day, "aggregate": aggregate, "runtime": runtime, "config_hash": hashes.pop(), **fleet}


def write_table(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
