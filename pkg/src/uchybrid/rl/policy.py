"""Sequential binary actor and value critic.

The actor scores one commitment bit at a time.  Its input for bit ``i`` is
the encoded observation, a one-hot generator index and the bits already
chosen for generators ``j < i``; the output passes through a sigmoid.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ArchitectureMismatch, InvalidArgument
from .nets import Mlp

CHECKPOINT_FORMAT = "uchybrid-policy"
CHECKPOINT_VERSION = 1
_LOG_EPS = 1e-12


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


@dataclass(frozen=True)
class Architecture:
    obs_dim: int
    n_gen: int
    hidden: tuple[int, ...] = (64, 64)

    def to_dict(self) -> dict:
        return {"obs_dim": self.obs_dim, "n_gen": self.n_gen, "hidden": list(self.hidden)}


class PolicyParams:
    def __init__(self, arch: Architecture, seed: int = 0, out_scale: float = 0.01):
        self.arch = arch
        rng = np.random.default_rng(seed)
        G = arch.n_gen
        self.actor = Mlp((arch.obs_dim + 2 * G, *arch.hidden, 1), rng, out_scale)
        self.critic = Mlp((arch.obs_dim, *arch.hidden, 1), rng, 1.0)

    @property
    def n_params(self) -> int:
        return self.actor.n_params + self.critic.n_params

    @classmethod
    def zeros(cls, arch: Architecture) -> "PolicyParams":
        p = cls(arch)
        for net in (p.actor, p.critic):
            net.set_flat(np.zeros(net.n_params))
        return p

    def copy(self) -> "PolicyParams":
        return PolicyParams.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "architecture": self.arch.to_dict(),
                "actor": self.actor.to_dict(), "critic": self.critic.to_dict()}

    @classmethod
    def from_dict(cls, d: dict, expect: Architecture | None = None) -> "PolicyParams":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ArchitectureMismatch("not a policy checkpoint of a supported version")
        a = d["architecture"]
        arch = Architecture(int(a["obs_dim"]), int(a["n_gen"]), tuple(a["hidden"]))
        if expect is not None and arch != expect:
            raise ArchitectureMismatch(f"checkpoint architecture {arch} != expected {expect}")
        p = cls.__new__(cls)
        p.arch = arch
        p.actor = Mlp.from_dict(d["actor"])
        p.critic = Mlp.from_dict(d["critic"])
        G = arch.n_gen
        if p.actor.sizes != (arch.obs_dim + 2 * G, *arch.hidden, 1) or p.critic.sizes != (arch.obs_dim, *arch.hidden, 1):
            raise ArchitectureMismatch("weight shapes disagree with the architecture header")
        return p

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, expect: Architecture | None = None) -> "PolicyParams":
        return cls.from_dict(json.loads(Path(path).read_text()), expect)


def actor_rows(obs_vec: np.ndarray, bits: np.ndarray, n_gen: int) -> np.ndarray:
    """Actor inputs for every bit of each action, teacher-forced on ``bits``.

    ``obs_vec`` is [B, D] and ``bits`` [B, G]; returns [B * G, D + 2G] with
    rows ordered (transition, bit).
    """
    obs_vec = np.atleast_2d(obs_vec)
    bits = np.atleast_2d(bits).astype(float)
    B = obs_vec.shape[0]
    G = n_gen
    eye = np.eye(G)
    lower = np.tril(np.ones((G, G)), -1)  # row i keeps bits j < i
    prefix = bits[:, None, :] * lower[None, :, :]
    rows = np.concatenate([np.repeat(obs_vec[:, None, :], G, axis=1),
                           np.broadcast_to(eye, (B, G, G)), prefix], axis=2)
    return rows.reshape(B * G, -1)


def policy_bit_probs(params: PolicyParams, obs_vec: np.ndarray, prefix) -> float:
    """Commit probability of the next bit given the bits chosen so far."""
    G = params.arch.n_gen
    prefix = np.asarray(prefix, dtype=float)
    i = len(prefix)
    if i >= G:
        raise InvalidArgument("prefix already covers every generator")
    bits = np.zeros(G)
    bits[:i] = prefix
    row = actor_rows(obs_vec, bits, G)[i:i + 1]
    return float(sigmoid(params.actor(row)[0, 0]))


def _batch_bit_prob(params: PolicyParams, obs_batch, bits_batch, i) -> np.ndarray:
    G = params.arch.n_gen
    B = obs_batch.shape[0]
    prefix = np.zeros((B, G))
    prefix[:, :i] = bits_batch[:, :i]
    onehot = np.zeros((B, G))
    onehot[:, i] = 1.0
    rows = np.concatenate([obs_batch, onehot, prefix], axis=1)
    return sigmoid(params.actor(rows)[:, 0])


def log_prob(params: PolicyParams, obs_vec, actions) -> np.ndarray:
    """log pi(a|s) for a batch of (observation, action) pairs."""
    actions = np.atleast_2d(actions).astype(float)
    G = params.arch.n_gen
    z = params.actor(actor_rows(obs_vec, actions, G))[:, 0].reshape(-1, G)
    return (actions * log_sigmoid(z) + (1 - actions) * log_sigmoid(-z)).sum(axis=1)


def log_prob_grad(params: PolicyParams, obs_vec, action) -> np.ndarray:
    """Analytic gradient of log pi(a|s) w.r.t. the flattened actor parameters."""
    action = np.atleast_2d(action).astype(float)
    G = params.arch.n_gen
    z, acts = params.actor.forward(actor_rows(obs_vec, action, G))
    dz = (action.reshape(-1, 1) - sigmoid(z))
    return np.concatenate([g.ravel() for g in params.actor.backward(acts, dz)])


def sample_actions(params: PolicyParams, obs_batch, rng: np.random.Generator):
    """Sample one action per observation row; returns (bits [B, G], log-probs [B])."""
    obs_batch = np.atleast_2d(obs_batch)
    B, G = obs_batch.shape[0], params.arch.n_gen
    bits = np.zeros((B, G))
    logp = np.zeros(B)
    for i in range(G):
        p = _batch_bit_prob(params, obs_batch, bits, i)
        b = (rng.random(B) < p).astype(float)
        bits[:, i] = b
        logp += np.log(np.where(b == 1, p, 1 - p) + _LOG_EPS)
    return bits.astype(np.int8), logp


def sample_action(params: PolicyParams, obs_vec, rng: np.random.Generator):
    bits, logp = sample_actions(params, obs_vec, rng)
    return bits[0], float(logp[0])


def argmax_action(params: PolicyParams, obs_vec) -> np.ndarray:
    """Greedy per-bit decoding; a probability of exactly 0.5 commits the unit."""
    obs = np.atleast_2d(obs_vec)
    G = params.arch.n_gen
    bits = np.zeros((1, G))
    for i in range(G):
        bits[0, i] = 1.0 if _batch_bit_prob(params, obs, bits, i)[0] >= 0.5 else 0.0
    return bits[0].astype(np.int8)


def enumerate_probable(params: PolicyParams, obs_vec, rho: float):
    """All actions with pi(a|s) >= rho, by depth-first search over bit prefixes.

    A prefix whose probability is already below ``rho`` cannot extend to a
    qualifying action, so the search visits at most ~G/rho nodes.
    Returns a list of (bits, probability).
    """
    if not 0 < rho < 1:
        raise InvalidArgument("rho must lie in (0, 1)")
    obs = np.atleast_2d(obs_vec)
    G = params.arch.n_gen
    out = []
    stack = [(np.zeros(G), 0, 1.0)]
    while stack:
        bits, i, prob = stack.pop()
        if i == G:
            out.append((bits.astype(np.int8), prob))
            continue
        p1 = float(_batch_bit_prob(params, obs, bits[None, :], i)[0])
        for b, pb in ((0, 1 - p1), (1, p1)):
            if prob * pb >= rho:
                nb = bits.copy()
                nb[i] = b
                stack.append((nb, i + 1, prob * pb))
    out.sort(key=lambda x: -x[1])
    return out


def value(params: PolicyParams, obs_vec) -> np.ndarray:
    return params.critic(np.atleast_2d(obs_vec))[:, 0]
