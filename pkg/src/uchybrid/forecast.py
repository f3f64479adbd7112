"""Forecast-error processes and quantile scenario trees.

Demand and wind forecast errors follow independent ARMA(p, q) processes
driven by Gaussian white noise.  Net-demand forecast errors (NDFE) are
obtained by clipping the perturbed forecasts at zero and differencing.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidArgument, UnsupportedTreeSize, DegenerateQuantileSpacing

if TYPE_CHECKING:
    from .system import ProblemInstance

# stream tags keep the tree-building and evaluation draws disjoint
TREE_STREAM = 1
EVAL_STREAM = 2
EPISODE_STREAM = 3


def substream(seed: int, index: int, tag: int = 0) -> np.random.Generator:
    """Independent generator keyed by (seed, tag, index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag), int(index)]))


@dataclass(frozen=True)
class ArmaSpec:
    ar: tuple[float, ...] = ()
    ma: tuple[float, ...] = ()
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(a) for a in self.ar))
        object.__setattr__(self, "ma", tuple(float(b) for b in self.ma))
        if self.sigma < 0:
            raise InvalidArgument("ARMA sigma must be non-negative")
        if not self.is_stationary():
            raise InvalidArgument(f"AR coefficients {self.ar} are not stationary")

    def is_stationary(self) -> bool:
        if not self.ar:
            return True
        # roots of 1 - a1 z - ... - ap z^p must lie outside the unit circle
        poly = np.r_[-np.asarray(self.ar)[::-1], 1.0]
        roots = np.roots(poly)
        return bool(np.all(np.abs(roots) > 1.0))

    def scaled(self, factor: float) -> "ArmaSpec":
        return ArmaSpec(self.ar, self.ma, self.sigma * factor)

    def to_dict(self) -> dict:
        return {"ar": list(self.ar), "ma": list(self.ma), "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "ArmaSpec":
        return cls(tuple(d.get("ar", ())), tuple(d.get("ma", ())), float(d["sigma"]))

    @classmethod
    def load(cls, path) -> "ArmaSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class ErrorTrajectory:
    values: np.ndarray
    # (last p values newest first, last q noises newest first)
    process_state: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())


def arma_filter(spec: ArmaSpec, noise: np.ndarray, init_values=None, init_noise=None) -> np.ndarray:
    """Run the ARMA recursion over pre-drawn unit-variance noise.

    ``noise`` has shape (..., T); the recursion runs along the last axis.
    Initial lags default to zero.  Returned values are in MW.
    """
    eps = spec.sigma * np.asarray(noise, dtype=float)
    T = eps.shape[-1]
    p, q = len(spec.ar), len(spec.ma)
    lead = eps.shape[:-1]
    x_hist = np.zeros(lead + (p,))
    e_hist = np.zeros(lead + (q,))
    if init_values is not None and p:
        x_hist[...] = np.asarray(init_values, dtype=float)[:p]
    if init_noise is not None and q:
        e_hist[...] = np.asarray(init_noise, dtype=float)[:q]
    ar = np.asarray(spec.ar)
    ma = np.asarray(spec.ma)
    out = np.empty_like(eps)
    for t in range(T):
        x = eps[..., t].copy()
        if p:
            x += x_hist @ ar
        if q:
            x += e_hist @ ma
        out[..., t] = x
        if p:
            x_hist = np.concatenate([x[..., None], x_hist[..., :-1]], axis=-1)
        if q:
            e_hist = np.concatenate([eps[..., t][..., None], e_hist[..., :-1]], axis=-1)
    return out


def sample_arma(spec: ArmaSpec, T: int, rng: np.random.Generator,
                init_values=None, init_noise=None) -> ErrorTrajectory:
    """Sample one ARMA error trajectory of length ``T``."""
    noise = rng.standard_normal(T)
    eps = spec.sigma * noise
    values = arma_filter(spec, noise, init_values, init_noise)
    p, q = len(spec.ar), len(spec.ma)
    x_all = np.r_[np.zeros(p) if init_values is None else np.asarray(init_values, float)[:p][::-1], values]
    e_all = np.r_[np.zeros(q) if init_noise is None else np.asarray(init_noise, float)[:q][::-1], eps]
    state = (tuple(x_all[::-1][:p]), tuple(e_all[::-1][:q]))
    return ErrorTrajectory(values, state)


def draw_scenario_noise(T: int, seed: int, index: int, tag: int) -> np.ndarray:
    """Unit-variance noise for scenario ``index``: row 0 demand, row 1 wind."""
    return substream(seed, index, tag).standard_normal((2, T))


def scenario_errors(inst: "ProblemInstance", seed: int, indices: Sequence[int], tag: int):
    """Demand and wind errors (each shape [len(indices), T]) for the given scenario indices."""
    noise = np.stack([draw_scenario_noise(inst.T, seed, i, tag) for i in indices]) if len(indices) else np.zeros((0, 2, inst.T))
    eta_d = arma_filter(inst.demand_arma, noise[:, 0, :])
    eta_w = arma_filter(inst.wind_arma, noise[:, 1, :])
    return eta_d, eta_w


def clip_net_demand_error(demand, wind, eta_d, eta_w) -> np.ndarray:
    """Net-demand forecast error after flooring realised demand and wind at zero."""
    d_err = np.maximum(0.0, demand + eta_d) - demand
    w_err = np.maximum(0.0, wind + eta_w) - wind
    return d_err - w_err


def net_demand_error_samples(inst: "ProblemInstance", n_samples: int, seed: int,
                             tag: int = TREE_STREAM) -> np.ndarray:
    """NDFE samples, shape [n_samples, T].  Sample ``s`` depends only on (seed, s)."""
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    eta_d, eta_w = scenario_errors(inst, seed, range(n_samples), tag)
    return clip_net_demand_error(inst.demand, inst.wind, eta_d, eta_w)


def scenario_probabilities(quantiles: Sequence[float]) -> np.ndarray:
    """Probability weights of quantile scenarios.

    Each weight spreads half the distance to its neighbouring quantiles,
    with the outermost scenarios absorbing the tails.  The weights sum to
    one for any valid quantile set with at least four members.
    """
    q = np.asarray(quantiles, dtype=float)
    N = len(q)
    if N < 4:
        raise UnsupportedTreeSize(f"quantile trees need at least 4 scenarios, got {N}")
    if np.any(q <= 0) or np.any(q >= 1) or np.any(np.diff(q) <= 0):
        raise InvalidArgument("quantiles must be strictly ascending in (0, 1)")
    phi = np.empty(N)
    phi[0] = 0.5 * q[1] ** 2 / (q[1] - q[0])
    phi[1] = 0.5 * (q[2] - q[0] - q[0] ** 2 / (q[1] - q[0]))
    phi[2:N - 2] = 0.5 * (q[3:N - 1] - q[1:N - 3])
    phi[N - 2] = 0.5 * (q[N - 1] - q[N - 3] - (1 - q[N - 1]) ** 2 / (q[N - 1] - q[N - 2]))
    phi[N - 1] = 0.5 * (1 - q[N - 2]) ** 2 / (q[N - 1] - q[N - 2])
    if np.any(phi <= 0):
        bad = np.flatnonzero(phi <= 0).tolist()
        raise DegenerateQuantileSpacing(f"non-positive scenario probability at positions {bad}")
    return phi


PAPER_QUANTILES = (0.002, 0.01, 0.1, 0.3, 0.5, 0.6, 0.75, 0.9, 0.95, 0.99, 0.993, 0.9967, 0.999)


@dataclass(frozen=True)
class ScenarioTree:
    quantiles: np.ndarray
    probabilities: np.ndarray
    ndfe: np.ndarray  # [T, N]
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_scenarios(self) -> int:
        return len(self.probabilities)

    @classmethod
    def deterministic(cls, T: int) -> "ScenarioTree":
        """Single zero-error scenario with probability one."""
        return cls(np.array([0.5]), np.array([1.0]), np.zeros((T, 1)))

    @classmethod
    def single(cls, ndfe: np.ndarray) -> "ScenarioTree":
        ndfe = np.asarray(ndfe, dtype=float).reshape(-1, 1)
        return cls(np.array([0.5]), np.array([1.0]), ndfe)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["period", "scenario", "ndfe_mw", "probability"])
            T, N = self.ndfe.shape
            for t in range(T):
                for n in range(N):
                    writer.writerow([t + 1, n + 1, repr(float(self.ndfe[t, n])),
                                     repr(float(self.probabilities[n]))])


def build_scenario_tree(inst: "ProblemInstance", quantiles: Sequence[float],
                        n_samples: int = 100_000, seed: int = 0) -> ScenarioTree:
    """Quantile scenario tree from the empirical NDFE distribution.

    Quantiles are taken per timestep with linear interpolation between
    order statistics.
    """
    phi = scenario_probabilities(quantiles)
    samples = net_demand_error_samples(inst, n_samples, seed)
    q = np.asarray(quantiles, dtype=float)
    ndfe = np.quantile(samples, q, axis=0, method="linear").T
    # interpolated quantiles are monotone in q up to round-off; make it exact
    ndfe = np.maximum.accumulate(ndfe, axis=1)
    return ScenarioTree(q, phi, ndfe, {"n_samples": n_samples, "seed": seed})


def ndfe_std(inst: "ProblemInstance", n_samples: int = 100_000, seed: int = 0) -> np.ndarray:
    """Per-timestep sample standard deviation of the NDFE."""
    if n_samples < 2:
        raise InvalidArgument("n_samples must be >= 2")
    return net_demand_error_samples(inst, n_samples, seed).std(axis=0, ddof=1)
