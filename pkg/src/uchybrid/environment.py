"""Unit commitment MDP and Monte Carlo schedule evaluation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dispatch import MeritOrder
from .errors import InfeasibleSchedule, InvalidArgument
from .forecast import EPISODE_STREAM, EVAL_STREAM, clip_net_demand_error, scenario_errors
from .system import ProblemInstance, Schedule, validate_schedule


def default_kappa(inst: ProblemInstance) -> float:
    """Fleet period cost at full output; the reward scale of the log transform."""
    return float(sum(pc.no_load + inst.dt * (pc.CP[-1] - pc.CP[0]) for pc in inst.costs))


def transform_reward(raw, kappa: float):
    """Log-damped training reward: -log(1 + |raw| / kappa)."""
    return -np.log1p(np.abs(raw) / kappa)


@dataclass(frozen=True)
class EnvState:
    status: np.ndarray          # current on/off per unit (status during the last period)
    time_in_status: np.ndarray  # steps spent in the current status
    t: int                      # 0-based index of the period to decide next
    demand_window: np.ndarray
    wind_window: np.ndarray
    realized_errors: tuple[float, float] = (0.0, 0.0)  # hidden: last (eta_D, eta_W)

    @property
    def up_down_times(self) -> np.ndarray:
        """Signed step counts: positive while on, negative while off."""
        return np.where(self.status == 1, self.time_in_status, -self.time_in_status)


@dataclass(frozen=True)
class Observation:
    up_down_times: np.ndarray
    demand_window: np.ndarray
    wind_window: np.ndarray
    t: int


def observe(state: EnvState) -> Observation:
    """Agent-visible part of the state; realised forecast errors are withheld."""
    return Observation(state.up_down_times, state.demand_window, state.wind_window, state.t)


def forced_mask(inst: ProblemInstance, status, time_in_status) -> np.ndarray:
    """Units that cannot change status at the next period."""
    return np.where(status == 1, time_in_status < inst.up_steps, time_in_status < inst.down_steps)


def legalise(inst: ProblemInstance, status, time_in_status, action) -> np.ndarray:
    """Override bits that would break min up/down times."""
    action = np.asarray(action, dtype=np.int8)
    return np.where(forced_mask(inst, status, time_in_status), status, action).astype(np.int8)


def advance_counters(status, time_in_status, applied):
    same = applied == status
    return applied.astype(np.int8), np.where(same, time_in_status + 1, 1)


def initial_counters(inst: ProblemInstance):
    status = inst.init_status.astype(np.int8)
    tis = np.where(status == 1, inst.init_up_steps, inst.init_down_steps).astype(int)
    return status, tis


class ObservationEncoder:
    """Maps observations to bounded feature vectors for the policy networks."""

    def __init__(self, inst: ProblemInstance):
        self.G, self.T = inst.G, inst.T
        self.bound = np.maximum(inst.up_steps, inst.down_steps) + 1.0
        self.scale = float(inst.p_max_arr.sum())

    @property
    def dim(self) -> int:
        return self.G + 2 * self.T + 2

    def __call__(self, obs: Observation) -> np.ndarray:
        ud = np.clip(obs.up_down_times, -self.bound, self.bound) / self.bound
        d = np.zeros(self.T)
        w = np.zeros(self.T)
        d[:len(obs.demand_window)] = obs.demand_window / self.scale
        w[:len(obs.wind_window)] = obs.wind_window / self.scale
        ang = 2 * math.pi * obs.t / self.T
        return np.concatenate([ud, d, w, [math.sin(ang), math.cos(ang)]])


class UCEnv:
    """Single-owner episode simulator: one commitment decision per period."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.state: EnvState | None = None
        self._eta_d = self._eta_w = self._ndfe = None
        self._merit_cache: dict[bytes, MeritOrder] = {}

    def reset(self, seed: int = 0, scenario: int = 0, tag: int = EPISODE_STREAM,
              zero_noise: bool = False) -> EnvState:
        inst = self.inst
        if zero_noise:
            self._eta_d = np.zeros(inst.T)
            self._eta_w = np.zeros(inst.T)
        else:
            eta_d, eta_w = scenario_errors(inst, seed, [scenario], tag)
            self._eta_d, self._eta_w = eta_d[0], eta_w[0]
        self._ndfe = clip_net_demand_error(inst.demand, inst.wind, self._eta_d, self._eta_w)
        status, tis = initial_counters(inst)
        self.state = EnvState(status, tis, 0, inst.demand.copy(), inst.wind.copy())
        self.u_history: list[np.ndarray] = []
        return self.state

    def merit(self, u_col) -> MeritOrder:
        key = np.asarray(u_col, np.int8).tobytes()
        mo = self._merit_cache.get(key)
        if mo is None:
            mo = MeritOrder([pc for pc, on in zip(self.inst.costs, u_col) if on], self.inst.c_ls)
            self._merit_cache[key] = mo
        return mo

    def step(self, action):
        """Apply an action for the next period.

        Returns ``(state, reward, done, info)``; ``info["applied"]`` holds the
        action after min up/down overrides.
        """
        s, inst = self.state, self.inst
        if s is None:
            raise InvalidArgument("call reset() before step()")
        if s.t >= inst.T:
            raise InvalidArgument("episode finished; call reset()")
        action = np.asarray(action)
        if action.shape != (inst.G,):
            raise InvalidArgument(f"action must have length {inst.G}")
        applied = legalise(inst, s.status, s.time_in_status, action)
        t = s.t
        startups = (applied == 1) & (s.status == 0)
        net = inst.demand[t] - inst.wind[t] + self._ndfe[t]
        mo = self.merit(applied)
        cost, shed, curtail = mo.costs(net, inst.dt, inst.c_ls, inst.c_wc)
        total = float(cost) + float(inst.startup_arr[startups].sum())
        status, tis = advance_counters(s.status, s.time_in_status, applied)
        self.state = EnvState(status, tis, t + 1, inst.demand[t + 1:].copy(), inst.wind[t + 1:].copy(),
                              (float(self._eta_d[t]), float(self._eta_w[t])))
        self.u_history.append(applied)
        done = self.state.t == inst.T
        info = {"applied": applied, "shed": float(shed), "curtail": float(curtail), "net_demand": float(net)}
        return self.state, -total, done, info

    def realised_schedule(self) -> Schedule:
        u = np.stack(self.u_history, axis=1) if self.u_history else np.zeros((self.inst.G, 0), np.int8)
        return Schedule.from_commitment(u, self.inst.init_status)


@dataclass
class EvaluationReport:
    expected_cost: float
    per_scenario_costs: np.ndarray
    shed_energy: float
    curtailed_energy: float
    standard_error: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "expected_cost": self.expected_cost,
            "per_scenario_costs": self.per_scenario_costs.tolist(),
            "shed_energy": self.shed_energy,
            "curtailed_energy": self.curtailed_energy,
            "standard_error": self.standard_error,
            "config": self.config,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def commitment_cost(s: Schedule, inst: ProblemInstance) -> float:
    """Startup costs of the schedule (no-load terms are part of dispatch)."""
    return float((s.v * inst.startup_arr[:, None]).sum())


def evaluate_schedule(s: Schedule, inst: ProblemInstance, R_n: int = 5000, seed: int = 0,
                      scenarios: np.ndarray | None = None) -> EvaluationReport:
    """Monte Carlo estimate of a schedule's expected operating cost.

    Scenario ``r`` draws its forecast errors from the substream keyed by
    (seed, r), so any partition of the scenarios gives the same result.
    ``scenarios`` optionally supplies pre-drawn NDFE samples [R, T].
    """
    violations = validate_schedule(s, inst)
    if violations:
        raise InfeasibleSchedule(violations)
    if scenarios is None:
        eta_d, eta_w = scenario_errors(inst, seed, range(R_n), EVAL_STREAM)
        ndfe = clip_net_demand_error(inst.demand, inst.wind, eta_d, eta_w)
    else:
        ndfe = np.asarray(scenarios, dtype=float)
        R_n = ndfe.shape[0]
    per = np.full(R_n, commitment_cost(s, inst))
    shed_e = np.zeros(R_n)
    curt_e = np.zeros(R_n)
    cache: dict[bytes, MeritOrder] = {}
    for t in range(inst.T):
        col = s.u[:, t]
        key = col.tobytes()
        mo = cache.get(key)
        if mo is None:
            mo = cache[key] = MeritOrder([pc for pc, on in zip(inst.costs, col) if on], inst.c_ls)
        cost, shed, curtail = mo.costs(inst.demand[t] - inst.wind[t] + ndfe[:, t], inst.dt, inst.c_ls, inst.c_wc)
        per += cost
        shed_e += shed * inst.dt
        curt_e += curtail * inst.dt
    # shifting by one sample keeps identical costs at exactly zero spread
    se = float((per - per[0]).std(ddof=1) / math.sqrt(R_n)) if R_n > 1 else 0.0
    return EvaluationReport(float(per.mean()), per, float(shed_e.mean()), float(curt_e.mean()), se,
                            {"seed": seed, "R_n": R_n})


def repair_commitment(inst: ProblemInstance, desired) -> Schedule:
    """Walk forward through ``desired`` holding any bit that min up/down times forbid."""
    desired = np.asarray(desired, np.int8)
    status, tis = initial_counters(inst)
    u = np.empty((inst.G, inst.T), np.int8)
    for t in range(inst.T):
        applied = legalise(inst, status, tis, desired[:, t])
        u[:, t] = applied
        status, tis = advance_counters(status, tis, applied)
    return Schedule.from_commitment(u, inst.init_status)
