"""Small feed-forward networks with hand-written backprop, and Adam."""
from __future__ import annotations

import numpy as np


class Mlp:
    """tanh hidden layers, linear output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        rng = rng or np.random.default_rng(0)
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = np.sqrt(6.0 / (n_in + n_out))
            W = rng.uniform(-lim, lim, (n_in, n_out))
            if k == len(self.sizes) - 2:
                W *= out_scale
            self.W.append(W)
            self.b.append(np.zeros(n_out))

    @property
    def params(self) -> list[np.ndarray]:
        return [x for pair in zip(self.W, self.b) for x in pair]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, X: np.ndarray):
        acts = [X]
        h = X
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            h = np.tanh(z) if k < len(self.W) - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(grad_out * output) in the order of :attr:`params`."""
        grads = []
        delta = grad_out
        for k in range(len(self.W) - 1, -1, -1):
            grads.append(delta.sum(axis=0))          # b_k
            grads.append(acts[k].T @ delta)           # W_k
            if k:
                delta = (delta @ self.W[k].T) * (1.0 - acts[k] ** 2)
        grads.reverse()
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        i = 0
        for p in self.params:
            p[...] = np.asarray(flat[i:i + p.size]).reshape(p.shape)
            i += p.size

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "W": [w.tolist() for w in self.W], "b": [b.tolist() for b in self.b]}

    @classmethod
    def from_dict(cls, d) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = tuple(d["sizes"])
        net.W = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["W"], net.sizes[:-1], net.sizes[1:])]
        net.b = [np.array(b, dtype=float) for b in d["b"]]
        return net


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8, max_grad_norm: float | None = 0.5):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
