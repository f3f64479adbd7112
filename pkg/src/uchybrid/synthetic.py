"""Synthetic demand and wind days standing in for proprietary system data."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .forecast import ArmaSpec, sample_arma
from .system import save_day

DAY_STREAM = 6


@dataclass(frozen=True)
class SyntheticDaySpec:
    """Double-peak demand with colored variation, plus a random-walk wind profile.

    Demand is ``scale`` times a normalised profile; wind is ``wind_capacity``
    times a capacity factor that wanders as a clipped random walk.
    """
    T: int = 24
    dt: float = 1.0
    scale: float = 1000.0           # MW, demand at profile value 1
    base: float = 0.75
    morning_amp: float = 0.12
    morning_hour: float = 9.0
    evening_amp: float = 0.18
    evening_hour: float = 18.5
    peak_width_h: float = 2.5
    night_dip: float = 0.1
    variation: ArmaSpec = field(default_factory=lambda: ArmaSpec((0.8,), (), 0.02))
    wind_capacity: float = 200.0    # MW
    wind_cf_mean: float = 0.35
    wind_cf_spread: float = 0.2
    wind_step_sigma: float = 0.08

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidArgument("scale must be positive")
        if self.T < 1 or self.dt <= 0:
            raise InvalidArgument("need T >= 1 and dt > 0")
        if self.wind_capacity < 0:
            raise InvalidArgument("wind capacity must be non-negative")
        if isinstance(self.variation, dict):
            object.__setattr__(self, "variation", ArmaSpec.from_dict(self.variation))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variation"] = self.variation.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDaySpec":
        return cls(**d)

    def profile(self) -> np.ndarray:
        h = (np.arange(self.T) + 0.5) * self.dt
        bump = lambda c: np.exp(-0.5 * ((h - c) / self.peak_width_h) ** 2)
        night = self.night_dip * np.cos(2 * math.pi * (h - 3.0) / 24.0)
        return self.base + self.morning_amp * bump(self.morning_hour) + self.evening_amp * bump(self.evening_hour) - night


def generate_day(spec: SyntheticDaySpec, seed: int, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Demand and wind forecasts for day ``index``; depends only on (spec, seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, DAY_STREAM, index]))
    level = 1.0 + 0.05 * rng.standard_normal()
    var = sample_arma(spec.variation, spec.T, rng).values
    demand = np.maximum(0.0, spec.scale * (spec.profile() * level + var))
    cf0 = np.clip(spec.wind_cf_mean + spec.wind_cf_spread * rng.standard_normal(), 0.0, 1.0)
    cf = np.empty(spec.T)
    x = cf0
    for t in range(spec.T):
        x = min(1.0, max(0.0, x + spec.wind_step_sigma * rng.standard_normal()))
        cf[t] = x
    return demand, spec.wind_capacity * cf


def generate_days(spec: SyntheticDaySpec, n_days: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if n_days < 1:
        raise InvalidArgument("n_days must be >= 1")
    return [generate_day(spec, seed, i) for i in range(n_days)]


def write_days(spec: SyntheticDaySpec, n_days: int, seed: int, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (d, w) in enumerate(generate_days(spec, n_days, seed)):
        p = out / f"day_{i:03d}.csv"
        save_day(p, d, w)
        paths.append(p)
    return paths
