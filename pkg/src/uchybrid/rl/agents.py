"""Inference agents: greedy model-free and one-step lookahead."""
from __future__ import annotations

import time

import numpy as np

from ..environment import ObservationEncoder, UCEnv, observe, legalise
from ..errors import InvalidArgument
from ..forecast import net_demand_error_samples
from ..system import ProblemInstance, Schedule
from .policy import PolicyParams, argmax_action, enumerate_probable, log_prob

LOOKAHEAD_STREAM = 4


def _check_fleet(params: PolicyParams, inst: ProblemInstance) -> ObservationEncoder:
    enc = ObservationEncoder(inst)
    if params.arch.n_gen != inst.G or params.arch.obs_dim != enc.dim:
        raise InvalidArgument(f"policy built for G={params.arch.n_gen}, obs_dim={params.arch.obs_dim}; "
                              f"instance has G={inst.G}, obs_dim={enc.dim}")
    return enc


def rl_mf_solve(params: PolicyParams, inst: ProblemInstance) -> Schedule:
    """Greedy rollout under zero realised noise (decisions are made day-ahead)."""
    enc = _check_fleet(params, inst)
    t0 = time.perf_counter()
    env = UCEnv(inst)
    env.reset(zero_noise=True)
    for _ in range(inst.T):
        env.step(argmax_action(params, enc(observe(env.state))))
    s = env.realised_schedule()
    rl_mf_solve.last_wall_time = time.perf_counter() - t0
    return s


def lookahead_candidates(params: PolicyParams, obs_vec, status, time_in_status, inst, rho):
    """Legalised candidate actions with their policy probabilities.

    Returns (actions [C, G], probs [C], n_enumerated).  The do-nothing action
    (keep every unit's status) is always included.
    """
    found = enumerate_probable(params, obs_vec, rho)
    acts, probs, seen = [], [], set()
    for bits, p in found:
        a = legalise(inst, status, time_in_status, bits)
        key = a.tobytes()
        if key in seen:
            continue
        seen.add(key)
        acts.append(a)
        probs.append(p)
    keep = np.asarray(status, np.int8)
    if keep.tobytes() not in seen:
        acts.append(keep)
        probs.append(float(np.exp(log_prob(params, obs_vec, keep)[0])))
    return np.array(acts, np.int8), np.array(probs), len(found)


def rl_la_solve(params: PolicyParams, inst: ProblemInstance, rho: float = 0.05,
                n_scen: int = 100, seed: int = 0) -> Schedule:
    """One-step lookahead over actions with pi(a|s) >= rho plus do-nothing.

    Each candidate is scored by its startup cost plus the mean operating cost
    of the immediate period over ``n_scen`` seeded error scenarios; the
    cheapest wins and ties go to the more probable action.
    """
    if not 0 < rho < 1:
        raise InvalidArgument("rho must lie in (0, 1)")
    enc = _check_fleet(params, inst)
    t0 = time.perf_counter()
    ndfe = net_demand_error_samples(inst, n_scen, seed, LOOKAHEAD_STREAM)
    env = UCEnv(inst)
    env.reset(zero_noise=True)
    max_cands = 0
    for t in range(inst.T):
        st = env.state
        obs = enc(observe(st))
        acts, probs, _ = lookahead_candidates(params, obs, st.status, st.time_in_status, inst, rho)
        max_cands = max(max_cands, len(acts))
        net = inst.demand[t] - inst.wind[t] + ndfe[:, t]
        scores = np.empty(len(acts))
        for i, a in enumerate(acts):
            cost, _, _ = env.merit(a).costs(net, inst.dt, inst.c_ls, inst.c_wc)
            startups = (a == 1) & (st.status == 0)
            scores[i] = float(inst.startup_arr[startups].sum()) + float(np.mean(cost))
        best = min(range(len(acts)), key=lambda i: (scores[i], -probs[i]))
        env.step(acts[best])
    s = env.realised_schedule()
    rl_la_solve.last_wall_time = time.perf_counter() - t0
    rl_la_solve.last_max_candidates = max_cands
    return s
