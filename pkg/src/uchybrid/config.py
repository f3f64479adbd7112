"""Experiment configuration: TOML files, defaults, and instance construction."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, InvalidArgument
from .forecast import ArmaSpec
from .mip import Budgets
from .rl.ppo import TrainConfig
from .synthetic import SyntheticDaySpec, generate_days
from .system import ProblemInstance, bundled_arma, bundled_fleet, duplicate_fleet, load_day, load_fleet

# fields that pick what a run covers rather than how it is computed; they stay out
# of the config hash so one report can combine several agents and days
RUN_SELECTORS = ("agent", "day_files", "checkpoint", "workers")

AGENTS = ("dmip", "smip", "rl-mf", "rl-la", "hybrid-vanilla", "hybrid-rl", "hybrid-rand")


@dataclass
class ExperimentConfig:
    fleet: str = "kaz10"                 # bundled fleet name or JSON path
    n_generators: int = 5
    day_files: list = field(default_factory=list)
    n_days: int = 10
    day_seed: int = 0
    n_train_days: int = 20
    train_day_seed: int = 1
    synthetic: dict = field(default_factory=dict)   # SyntheticDaySpec overrides
    demand_scale_factor: float = 1.0     # scales demand, wind and error sigmas for larger fleets
    dt: float = 1.0
    n_segments: int = 4
    c_ls: float = 10_000.0
    c_wc: float = 40.0
    demand_arma: str = "demand"          # bundled name or JSON path
    wind_arma: str = "wind"
    quantiles: list = field(default_factory=lambda: [0.1, 0.5, 0.9, 0.999])
    tree_samples: int = 20_000
    reserve_multiplier: float = 4.0
    R_n: int = 5000
    pf_subsample: int = 50
    node_budget: int | None = 50_000
    time_budget_s: float | None = None
    agent: str = "smip"
    K: int = 8
    rho: float = 0.05
    la_scenarios: int = 100
    checkpoint: str = "policy.json"
    train: dict = field(default_factory=dict)        # TrainConfig overrides
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {', '.join(AGENTS)}")
        if self.n_generators < 1:
            raise ConfigError("n_generators must be >= 1")
        if self.demand_scale_factor <= 0:
            raise ConfigError("demand_scale_factor must be positive")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        try:
            self.synthetic_spec()
            self.train_config()
        except (TypeError, InvalidArgument) as exc:
            raise ConfigError(str(exc)) from exc

    # -- (de)serialisation --------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        """Digest of every setting that changes results; run selectors are left out."""
        d = {k: v for k, v in self.to_dict().items() if k not in RUN_SELECTORS}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        """Provenance block embedded in every emitted artifact."""
        return {"config_hash": self.hash, "seed": self.seed, "version": __version__,
                "n_generators": self.n_generators, "demand_scale_factor": self.demand_scale_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        flat = {}
        for k, v in d.items():
            if isinstance(v, dict) and k not in ("synthetic", "train"):
                flat.update(v)  # TOML tables are only for grouping
            else:
                flat[k] = v
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**flat)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def override(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -- derived objects ----------------------------------------------------
    def synthetic_spec(self) -> SyntheticDaySpec:
        d = dict(self.synthetic)
        d.setdefault("dt", self.dt)
        d.setdefault("T", int(round(24 / self.dt)))
        spec = SyntheticDaySpec.from_dict(d)
        f = self.demand_scale_factor
        return replace(spec, scale=spec.scale * f, wind_capacity=spec.wind_capacity * f)

    def train_config(self) -> TrainConfig:
        d = {"seed": self.seed, **self.train}
        return TrainConfig(**d)

    def budgets(self) -> Budgets:
        return Budgets(self.node_budget, self.time_budget_s)

    def fleet_units(self):
        base = bundled_fleet(self.fleet) if not self.fleet.endswith(".json") else load_fleet(self.fleet)
        if self.n_generators <= len(base):
            return base[:self.n_generators]
        return duplicate_fleet(base, self.n_generators)

    def arma_specs(self) -> tuple[ArmaSpec, ArmaSpec]:
        def get(name):
            return ArmaSpec.load(name) if name.endswith(".json") else bundled_arma(name)
        f = self.demand_scale_factor
        return get(self.demand_arma).scaled(f), get(self.wind_arma).scaled(f)

    def instance(self, demand, wind, name: str = "") -> ProblemInstance:
        da, wa = self.arma_specs()
        return ProblemInstance.from_fleet(self.fleet_units(), demand, wind, dt=self.dt, n_segments=self.n_segments,
                                          c_ls=self.c_ls, c_wc=self.c_wc, demand_arma=da, wind_arma=wa, name=name)

    def train_days(self) -> list[ProblemInstance]:
        """Synthetic training days, drawn from a seed disjoint from the test days."""
        spec = self.synthetic_spec()
        return [self.instance(d, w, name=f"train_{i:03d}")
                for i, (d, w) in enumerate(generate_days(spec, self.n_train_days, self.train_day_seed))]

    def days(self) -> list[ProblemInstance]:
        """Instances for the configured day files, or synthetic days when none are listed."""
        if self.day_files:
            return [self.instance(*load_day(p), name=Path(p).stem) for p in self.day_files]
        spec = self.synthetic_spec()
        return [self.instance(d, w, name=f"day_{i:03d}")
                for i, (d, w) in enumerate(generate_days(spec, self.n_days, self.day_seed))]


def default_config_text() -> str:
    return (resources.files("uchybrid") / "data" / "configs" / "default.toml").read_text()


def fleet_scale_factor(n_generators: int, reference: int = 5, fleet: str = "kaz10") -> float:
    """Capacity ratio between an n-unit fleet and the reference fleet size."""
    base = bundled_fleet(fleet)
    cap = lambda n: float(np.sum([g.p_max for g in (base[:n] if n <= len(base) else duplicate_fleet(base, n))]))
    return cap(n_generators) / cap(reference)
