"""Proximal policy optimisation for the sequential binary actor."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..environment import ObservationEncoder, UCEnv, default_kappa, observe, transform_reward
from ..errors import InvalidArgument, TrainingDiverged
from ..system import ProblemInstance
from .nets import Adam
from .policy import Architecture, PolicyParams, actor_rows, log_sigmoid, sample_actions, sigmoid

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    iterations: int = 300
    episodes_per_iter: int = 8
    epochs: int = 4
    minibatch: int = 64
    clip: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    gamma: float = 1.0
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    reward_scale: float | None = None  # kappa; default from the fleet
    hidden: tuple[int, ...] = (64, 64)
    max_grad_norm: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise InvalidArgument("clip must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise InvalidArgument("gamma must lie in (0, 1]")
        self.hidden = tuple(self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class IterationLog:
    iteration: int
    mean_cost: float
    mean_reward: float
    loss_actor: float
    loss_critic: float
    entropy: float


@dataclass
class TrainResult:
    params: PolicyParams
    curve: list[IterationLog] = field(default_factory=list)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.mean_cost for r in self.curve])

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "mean_cost", "mean_reward", "loss_actor", "loss_critic", "entropy"])
            for r in self.curve:
                w.writerow([r.iteration, repr(r.mean_cost), repr(r.mean_reward), repr(r.loss_actor),
                            repr(r.loss_critic), repr(r.entropy)])


def architecture_for(inst: ProblemInstance, hidden=(64, 64)) -> Architecture:
    return Architecture(ObservationEncoder(inst).dim, inst.G, tuple(hidden))


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates for one finished episode."""
    T = len(rewards)
    adv = np.zeros(T)
    nxt = 0.0
    running = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * nxt - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        nxt = values[t]
    return adv


def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, clip: float) -> float:
    """Mean PPO clipped objective (to be maximised)."""
    return float(np.mean(np.minimum(ratio * adv, np.clip(ratio, 1 - clip, 1 + clip) * adv)))


def actor_loss_and_grads(params: PolicyParams, obs, actions, logp_old, adv, clip, entropy_coef):
    """Clipped-surrogate actor loss with entropy bonus, and its parameter gradients."""
    G = params.arch.n_gen
    B = len(adv)
    actions = actions.astype(float)
    z, acts = params.actor.forward(actor_rows(obs, actions, G))
    z = z[:, 0].reshape(B, G)
    logp = (actions * log_sigmoid(z) + (1 - actions) * log_sigmoid(-z)).sum(axis=1)
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip, 1 + clip) * adv
    surr = np.minimum(unclipped, clipped)
    p = sigmoid(z)
    ent_bits = -(p * log_sigmoid(z) + (1 - p) * log_sigmoid(-z))
    entropy = ent_bits.sum(axis=1)
    loss = -surr.mean() - entropy_coef * entropy.mean()
    # gradient flows through the unclipped branch only where it is the active minimum
    active = unclipped <= clipped
    dloss_dlogp = np.where(active, -ratio * adv, 0.0) / B
    dz = dloss_dlogp[:, None] * (actions - p)
    # d entropy / dz = -p (1 - p) z per bit
    dz += entropy_coef / B * p * (1 - p) * z
    grads = params.actor.backward(acts, dz.reshape(-1, 1))
    return float(loss), grads, float(entropy.mean())


def critic_loss_and_grads(params: PolicyParams, obs, returns):
    v, acts = params.critic.forward(obs)
    err = v[:, 0] - returns
    loss = float(np.mean(err ** 2))
    grads = params.critic.backward(acts, (2.0 * err / len(err))[:, None])
    return loss, grads


def _day_source(days) -> Callable[[np.random.Generator], ProblemInstance]:
    if callable(days):
        return days
    days = list(days)
    if not days:
        raise InvalidArgument("at least one training day is required")
    return lambda rng: days[int(rng.integers(len(days)))]


def collect_rollouts(params: PolicyParams, days, n_episodes: int, rng: np.random.Generator, kappa: float | None):
    """Run ``n_episodes`` episodes in lockstep with the sampled policy."""
    source = _day_source(days)
    insts = [source(rng) for _ in range(n_episodes)]
    envs = [UCEnv(inst) for inst in insts]
    encs = [ObservationEncoder(inst) for inst in insts]
    seeds = rng.integers(0, 2**31 - 1, n_episodes)
    for env, s in zip(envs, seeds):
        env.reset(int(s))
    T = insts[0].T
    obs_buf, act_buf, raw_buf = [], [], []
    for t in range(T):
        obs = np.stack([enc(observe(env.state)) for enc, env in zip(encs, envs)])
        bits, _ = sample_actions(params, obs, rng)
        applied, raws = [], []
        for env, a in zip(envs, bits):
            _, r, _, info = env.step(a)
            applied.append(info["applied"])
            raws.append(r)
        obs_buf.append(obs)
        act_buf.append(np.stack(applied))
        raw_buf.append(raws)
    obs = np.stack(obs_buf, axis=1)          # [E, T, D]
    acts = np.stack(act_buf, axis=1)         # [E, T, G]
    raw = np.array(raw_buf).T                # [E, T]
    kap = np.array([kappa or default_kappa(inst) for inst in insts])
    rewards = transform_reward(raw, kap[:, None])
    return obs, acts, raw, rewards


def ppo_train(days: Sequence[ProblemInstance] | Callable, cfg: TrainConfig,
              params: PolicyParams | None = None, progress: Callable | None = None) -> TrainResult:
    """Train the actor-critic with PPO on episodes drawn from ``days``."""
    rng = np.random.default_rng(cfg.seed)
    source = _day_source(days)
    probe = source(np.random.default_rng(cfg.seed))
    arch = architecture_for(probe, cfg.hidden)
    if params is None:
        params = PolicyParams(arch, seed=cfg.seed)
    elif params.arch != arch:
        raise InvalidArgument("initial params do not match the training fleet")
    opt_a = Adam(params.actor.params, cfg.actor_lr, max_grad_norm=cfg.max_grad_norm)
    opt_c = Adam(params.critic.params, cfg.critic_lr, max_grad_norm=cfg.max_grad_norm)
    G = arch.n_gen
    curve = []
    for it in range(cfg.iterations):
        obs, acts, raw, rewards = collect_rollouts(params, source, cfg.episodes_per_iter, rng, cfg.reward_scale)
        E, T, D = obs.shape
        flat_obs = obs.reshape(E * T, D)
        flat_act = acts.reshape(E * T, G)
        values = params.critic(flat_obs)[:, 0].reshape(E, T)
        adv = np.stack([gae(rewards[e], values[e], cfg.gamma, cfg.gae_lambda) for e in range(E)])
        returns = (adv + values).ravel()
        adv = adv.ravel()
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        z = params.actor(actor_rows(flat_obs, flat_act, G))[:, 0].reshape(-1, G)
        fa = flat_act.astype(float)
        logp_old = (fa * log_sigmoid(z) + (1 - fa) * log_sigmoid(-z)).sum(axis=1)
        n = E * T
        la = lc = ent = 0.0
        n_batches = 0
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                mb = perm[start:start + cfg.minibatch]
                la, ga, ent = actor_loss_and_grads(params, flat_obs[mb], flat_act[mb], logp_old[mb],
                                                   adv[mb], cfg.clip, cfg.entropy_coef)
                lc, gc = critic_loss_and_grads(params, flat_obs[mb], returns[mb])
                if not (np.isfinite(la) and np.isfinite(lc)):
                    raise TrainingDiverged(f"non-finite loss at iteration {it}",
                                           {"iteration": it, "loss_actor": la, "loss_critic": lc,
                                            "params": params.to_dict()})
                opt_a.step(ga)
                opt_c.step(gc)
                n_batches += 1
        rec = IterationLog(it, float(-raw.sum(axis=1).mean()), float(rewards.sum(axis=1).mean()), la, lc, ent)
        curve.append(rec)
        if progress is not None:
            progress(rec)
        log.debug("iter %d cost %.1f", it, rec.mean_cost)
    return TrainResult(params, curve)
