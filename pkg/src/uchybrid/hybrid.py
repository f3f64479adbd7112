"""Warm-started concurrent branch and bound with Monte Carlo selection."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import (EvaluationReport, ObservationEncoder, UCEnv, advance_counters, evaluate_schedule,
                          forced_mask, initial_counters, observe)
from .errors import InfeasibleSchedule, InvalidArgument
from .forecast import EVAL_STREAM, ScenarioTree, clip_net_demand_error, scenario_errors
from .mip import Budgets, MipModel, SolveReport, branch_and_bound, build_smip, schedule_objective
from .rl.policy import PolicyParams, sample_actions
from .system import ProblemInstance, Schedule, validate_schedule

log = logging.getLogger(__name__)

VANILLA, RL, RAND = "vanilla", "rl", "rand"
WARM_STREAM = 5
MAX_RETRIES = 50


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, WARM_STREAM, *keys]))


def rand_schedule(inst: ProblemInstance, seed: int) -> Schedule:
    """Random feasible commitment: free units flip with probability 1/2 each period."""
    rng = _rng(seed, 0)
    status, tis = initial_counters(inst)
    u = np.empty((inst.G, inst.T), np.int8)
    for t in range(inst.T):
        flip = (rng.random(inst.G) < 0.5) & ~forced_mask(inst, status, tis)
        applied = np.where(flip, 1 - status, status).astype(np.int8)
        u[:, t] = applied
        status, tis = advance_counters(status, tis, applied)
    return Schedule.from_commitment(u, inst.init_status)


def rl_sample_schedule(params: PolicyParams, inst: ProblemInstance, rng: np.random.Generator) -> Schedule:
    """One stochastic policy rollout; the environment masks illegal bits."""
    enc = ObservationEncoder(inst)
    if params.arch.n_gen != inst.G or params.arch.obs_dim != enc.dim:
        raise InvalidArgument("policy fleet size does not match the instance")
    env = UCEnv(inst)
    env.reset(zero_noise=True)
    for _ in range(inst.T):
        bits, _ = sample_actions(params, enc(observe(env.state))[None, :], rng)
        env.step(bits[0])
    return env.realised_schedule()


@dataclass
class WarmStartSet:
    method: str
    candidates: list  # Schedule per candidate; [None] for vanilla
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in (VANILLA, RL, RAND):
            raise InvalidArgument(f"unknown warm-start method {self.method!r}")
        if not self.candidates:
            raise InvalidArgument("at least one candidate required")

    @property
    def K(self) -> int:
        return len(self.candidates)

    @classmethod
    def vanilla(cls) -> "WarmStartSet":
        return cls(VANILLA, [None], {"start": "all-on"})


def _distinct(draw, K: int, what: str) -> tuple[list[Schedule], list[int]]:
    out, seen, attempts = [], set(), []
    for k in range(K):
        for attempt in range(MAX_RETRIES + 1):
            s = draw(k, attempt)
            if s not in seen:
                break
        else:
            log.warning("%s candidate %d duplicates an earlier one after %d retries", what, k, MAX_RETRIES)
        seen.add(s)
        out.append(s)
        attempts.append(attempt)
    return out, attempts


def rand_warm_starts(inst: ProblemInstance, K: int = 8, seed: int = 0) -> WarmStartSet:
    """K distinct random feasible schedules."""
    def draw(k, attempt):
        return rand_schedule(inst, int(np.random.SeedSequence([seed, k, attempt]).generate_state(1)[0]))
    cands, attempts = _distinct(draw, K, "rand")
    return WarmStartSet(RAND, cands, {"seed": seed, "attempts": attempts})


def rl_warm_starts(params: PolicyParams, inst: ProblemInstance, K: int = 8, seed: int = 0,
                   checkpoint: str | None = None) -> WarmStartSet:
    """K distinct schedules from independent seeded policy rollouts."""
    cands, attempts = _distinct(lambda k, a: rl_sample_schedule(params, inst, _rng(seed, 1, k, a)), K, "rl")
    return WarmStartSet(RL, cands, {"seed": seed, "attempts": attempts, "checkpoint": checkpoint})


@dataclass
class HybridReport:
    method: str
    solves: list[SolveReport]
    evaluations: list[EvaluationReport]
    warm_costs: list[float | None]
    selected: int
    perfect_foresight: float | None = None
    config: dict = field(default_factory=dict)

    @property
    def eval_costs(self) -> np.ndarray:
        return np.array([e.expected_cost for e in self.evaluations])

    @property
    def selected_cost(self) -> float:
        return self.evaluations[self.selected].expected_cost

    @property
    def uncertainty_cost(self) -> float | None:
        return None if self.perfect_foresight is None else self.selected_cost - self.perfect_foresight

    @property
    def selected_schedule(self) -> Schedule:
        return self.solves[self.selected].incumbent

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "method": self.method, "selected": self.selected, "selected_cost": self.selected_cost,
            "perfect_foresight": self.perfect_foresight, "uncertainty_cost": self.uncertainty_cost,
            "candidates": [{"warmstart_cost": w, "solve": s.to_dict(timing),
                            "evaluation": {k: v for k, v in e.to_dict().items() if k != "per_scenario_costs"}}
                           for w, s, e in zip(self.warm_costs, self.solves, self.evaluations)],
            "config": self.config,
        }

    def save(self, path, timing: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(timing), indent=2) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["candidate", "method", "warmstart_cost", "final_ub", "final_lb", "gap_pct", "eval_cost", "selected"])
            for k, (wc, s, e) in enumerate(zip(self.warm_costs, self.solves, self.evaluations)):
                w.writerow([k, self.method, "" if wc is None else repr(wc), repr(s.ub), repr(s.lb),
                            repr(s.mip_gap), repr(e.expected_cost), int(k == self.selected)])


def select_candidate(costs, gaps) -> int:
    """Index of the cheapest evaluated incumbent; ties by lower gap, then lower index."""
    return min(range(len(costs)), key=lambda k: (costs[k], gaps[k], k))


def _solve_one(args):
    model, warm, budgets, seed = args
    return branch_and_bound(model, warm, budgets, seed)


def candidate_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def run_hybrid(inst: ProblemInstance, model: MipModel | ScenarioTree, warm_starts: WarmStartSet,
               budgets: Budgets = Budgets(), R_n_eval: int = 5000, seed: int = 0,
               workers: int = 1, eval_seed: int | None = None) -> HybridReport:
    """Solve once per warm start and keep the incumbent with the lowest expected cost.

    Every incumbent is evaluated on the same scenario set, so selection is a
    paired comparison.  Results are ordered by candidate index regardless of
    completion order.
    """
    if isinstance(model, ScenarioTree):
        model = build_smip(inst, model)
    for k, s in enumerate(warm_starts.candidates):
        if s is not None and validate_schedule(s, inst):
            raise InfeasibleSchedule(validate_schedule(s, inst))
    eval_seed = seed if eval_seed is None else eval_seed
    jobs = [(model, s, budgets, candidate_seed(seed, k)) for k, s in enumerate(warm_starts.candidates)]
    if workers <= 1 or len(jobs) == 1:
        solves = [_solve_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            solves = list(ex.map(_solve_one, jobs))
    eta_d, eta_w = scenario_errors(inst, eval_seed, range(R_n_eval), EVAL_STREAM)
    scen = clip_net_demand_error(inst.demand, inst.wind, eta_d, eta_w)
    evals = []
    for r in solves:
        if r.incumbent is None:
            raise InfeasibleSchedule([])
        ev = evaluate_schedule(r.incumbent, inst, scenarios=scen)
        ev.config.update(seed=eval_seed, R_n=R_n_eval)
        evals.append(ev)
    warm = [r.warm_start_objective for r in solves]
    sel = select_candidate([e.expected_cost for e in evals], [r.mip_gap for r in solves])
    cfg = {"K": warm_starts.K, "seed": seed, "eval_seed": eval_seed, "R_n": R_n_eval,
           "node_budget": budgets.nodes, "time_budget_s": budgets.time_s, "provenance": warm_starts.provenance}
    return HybridReport(warm_starts.method, solves, evals, warm, sel, None, cfg)


@dataclass
class PerfectForesight:
    mean: float
    standard_error: float
    lower_mean: float       # mean of certified lower bounds
    exact: bool             # every solve closed its gap
    per_scenario: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "standard_error": self.standard_error, "lower_mean": self.lower_mean,
                "exact": self.exact, "per_scenario": self.per_scenario.tolist()}


def perfect_foresight_cost(inst: ProblemInstance, budgets: Budgets = Budgets(), n_sub: int = 50,
                           seed: int = 0, scenarios: np.ndarray | None = None) -> PerfectForesight:
    """Mean optimum over realised error trajectories, each solved with full knowledge.

    By default the first ``n_sub`` trajectories of the evaluation stream for
    ``seed`` are used, so the baseline shares scenarios with
    :func:`evaluate_schedule` at the same seed.
    """
    if scenarios is None:
        eta_d, eta_w = scenario_errors(inst, seed, range(n_sub), EVAL_STREAM)
        scenarios = clip_net_demand_error(inst.demand, inst.wind, eta_d, eta_w)
    ub, lb = [], []
    exact = True
    for real in np.atleast_2d(scenarios):
        r = branch_and_bound(build_smip(inst, ScenarioTree.single(real), min_scenarios=1), budgets=budgets)
        if r.incumbent is None:
            raise InfeasibleSchedule([])
        exact &= r.mip_gap == 0.0
        ub.append(r.ub)
        lb.append(r.lb)
    ub, lb = np.array(ub), np.array(lb)
    se = float(ub.std(ddof=1) / math.sqrt(len(ub))) if len(ub) > 1 else 0.0
    if not exact:
        log.warning("perfect-foresight solves hit their budget; reporting bound pair")
    return PerfectForesight(float(ub.mean()), se, float(lb.mean()), bool(exact), ub)


__all__ = ["HybridReport", "PerfectForesight", "WarmStartSet", "perfect_foresight_cost", "rand_schedule",
           "rand_warm_starts", "rl_sample_schedule", "rl_warm_starts", "run_hybrid", "schedule_objective",
           "select_candidate"]
