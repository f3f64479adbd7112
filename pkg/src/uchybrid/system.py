"""Generators, fleets, day instances and commitment schedules."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, UnsupportedCostCurve
from .forecast import ArmaSpec

DEFAULT_SEGMENTS = 4
_EPS = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Generator:
    id: str
    p_min: float
    p_max: float
    cost_quadratic: tuple[float, float, float]
    startup_cost: float
    min_up: float
    min_down: float
    initial_status: int
    initial_up_time: float = 0.0
    initial_down_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cost_quadratic", tuple(float(x) for x in self.cost_quadratic))
        object.__setattr__(self, "initial_status", int(bool(self.initial_status)))
        if not 0 < self.p_min <= self.p_max:
            raise InvalidArgument(f"{self.id}: need 0 < p_min <= p_max")
        if self.min_up <= 0 or self.min_down <= 0:
            raise InvalidArgument(f"{self.id}: min up/down times must be positive")
        if self.startup_cost < 0:
            raise InvalidArgument(f"{self.id}: negative startup cost")
        if self.initial_up_time < 0 or self.initial_down_time < 0:
            raise InvalidArgument(f"{self.id}: negative initial up/down time")
        if self.initial_status and self.initial_down_time > 0:
            raise InvalidArgument(f"{self.id}: initially on but initial_down_time > 0")
        if not self.initial_status and self.initial_up_time > 0:
            raise InvalidArgument(f"{self.id}: initially off but initial_up_time > 0")

    def fuel_cost(self, p):
        """Quadratic fuel cost in $/h at output ``p`` MW."""
        a, b, c = self.cost_quadratic
        return a + b * p + c * p * p

    def to_dict(self) -> dict:
        return {
            "id": self.id, "p_min": self.p_min, "p_max": self.p_max,
            "cost_quadratic": list(self.cost_quadratic), "startup_cost": self.startup_cost,
            "min_up": self.min_up, "min_down": self.min_down,
            "initial_status": self.initial_status,
            "initial_up_time": self.initial_up_time, "initial_down_time": self.initial_down_time,
        }


@dataclass(frozen=True)
class PiecewiseCost:
    generator_id: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(p), float(c)) for p, c in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise InvalidArgument("piecewise cost needs at least two points")
        P = np.array([p for p, _ in pts])
        C = np.array([c for _, c in pts])
        if np.any(np.diff(P) <= 0):
            raise InvalidArgument(f"{self.generator_id}: breakpoints must strictly increase")
        if np.any(np.diff(C) < -_EPS):
            raise UnsupportedCostCurve(f"{self.generator_id}: cost must be nondecreasing")
        slopes = np.diff(C) / np.diff(P)
        if np.any(np.diff(slopes) < -1e-9 * max(1.0, float(np.abs(slopes).max()))):
            raise UnsupportedCostCurve(f"{self.generator_id}: piecewise cost is not convex")

    @property
    def P(self) -> np.ndarray:
        return np.array([p for p, _ in self.points])

    @property
    def CP(self) -> np.ndarray:
        return np.array([c for _, c in self.points])

    @property
    def p_min(self) -> float:
        return self.points[0][0]

    @property
    def p_max(self) -> float:
        return self.points[-1][0]

    @property
    def no_load(self) -> float:
        """Cost at minimum output (CP at the first point)."""
        return self.points[0][1]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.P)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.CP) / np.diff(self.P)

    def cost_above_min(self, p_above):
        """Production cost above minimum, C_g(p), for output ``p_above`` MW above p_min."""
        return np.interp(self.p_min + np.asarray(p_above, dtype=float), self.P, self.CP) - self.no_load


def piecewise_from_quadratic(gen: Generator, n_segments: int = DEFAULT_SEGMENTS) -> PiecewiseCost:
    """Evenly spaced secant approximation of the quadratic fuel curve."""
    if n_segments < 1:
        raise InvalidArgument("n_segments must be >= 1")
    if gen.cost_quadratic[2] < 0:
        raise UnsupportedCostCurve(f"{gen.id}: concave fuel curve (c < 0)")
    P = np.linspace(gen.p_min, gen.p_max, n_segments + 1)
    return PiecewiseCost(gen.id, tuple(zip(P.tolist(), gen.fuel_cost(P).tolist())))


def duplicate_fleet(base: Sequence[Generator], n_target: int) -> list[Generator]:
    """Extend a fleet by cycling through the base units with fresh ids."""
    n_base = len(base)
    if n_base == 0 or n_target < n_base:
        raise InvalidArgument(f"n_target={n_target} smaller than base fleet of {n_base}")
    return [replace(base[k % n_base], id=f"{base[k % n_base].id}_{k // n_base}")
            for k in range(n_target)]


def load_fleet(path) -> list[Generator]:
    records = json.loads(Path(path).read_text())
    return [Generator(**rec) for rec in records]


def save_fleet(fleet: Sequence[Generator], path) -> None:
    Path(path).write_text(json.dumps([g.to_dict() for g in fleet], indent=2) + "\n")


def bundled_fleet(name: str = "kaz10") -> list[Generator]:
    ref = resources.files("uchybrid") / "data" / "fleets" / f"{name}.json"
    return [Generator(**rec) for rec in json.loads(ref.read_text())]


def bundled_arma(name: str) -> ArmaSpec:
    ref = resources.files("uchybrid") / "data" / "arma" / f"{name}.json"
    return ArmaSpec.from_dict(json.loads(ref.read_text()))


def load_day(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a day file with header ``period,demand_mw,wind_mw``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["period", "demand_mw", "wind_mw"]:
            raise InvalidArgument(f"{path}: expected header period,demand_mw,wind_mw")
        rows = list(reader)
    periods = [int(r["period"]) for r in rows]
    if periods != list(range(1, len(rows) + 1)):
        raise InvalidArgument(f"{path}: periods must run 1..T")
    return (np.array([float(r["demand_mw"]) for r in rows]),
            np.array([float(r["wind_mw"]) for r in rows]))


def save_day(path, demand, wind) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "demand_mw", "wind_mw"])
        for t, (d, w) in enumerate(zip(demand, wind), 1):
            writer.writerow([t, repr(float(d)), repr(float(w))])


def hours_to_steps(hours: float, dt: float) -> int:
    """Duration constraints round up to whole steps."""
    return max(1, math.ceil(hours / dt - _EPS))


def elapsed_steps(hours: float, dt: float) -> int:
    """Time already spent in a state counts whole elapsed steps only."""
    return int(math.floor(hours / dt + _EPS))


@dataclass(frozen=True)
class ProblemInstance:
    generators: tuple[Generator, ...]
    costs: tuple[PiecewiseCost, ...]
    demand: np.ndarray
    wind: np.ndarray
    dt: float = 0.5
    c_ls: float = 10_000.0
    c_wc: float = 40.0
    demand_arma: ArmaSpec = field(default_factory=ArmaSpec)
    wind_arma: ArmaSpec = field(default_factory=ArmaSpec)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "demand", _frozen(self.demand))
        object.__setattr__(self, "wind", _frozen(self.wind))
        if len(self.generators) != len(self.costs):
            raise InvalidArgument("one piecewise cost per generator required")
        for g, pc in zip(self.generators, self.costs):
            if pc.generator_id != g.id or abs(pc.p_min - g.p_min) > 1e-9 or abs(pc.p_max - g.p_max) > 1e-9:
                raise InvalidArgument(f"piecewise cost does not match generator {g.id}")
        if self.demand.ndim != 1 or self.demand.shape != self.wind.shape:
            raise InvalidArgument("demand and wind must be 1-D series of equal length T")
        if np.any(self.demand < 0) or np.any(self.wind < 0):
            raise InvalidArgument("demand and wind must be non-negative")
        if self.dt <= 0:
            raise InvalidArgument("dt must be positive")
        if not self.c_ls > self.c_wc > 0:
            raise InvalidArgument("need c_ls > c_wc > 0")
        dt = self.dt
        derived = {
            "p_min_arr": _frozen([g.p_min for g in self.generators]),
            "p_max_arr": _frozen([g.p_max for g in self.generators]),
            "startup_arr": _frozen([g.startup_cost for g in self.generators]),
            "no_load_arr": _frozen([pc.no_load for pc in self.costs]),
            "up_steps": _frozen([hours_to_steps(g.min_up, dt) for g in self.generators], int),
            "down_steps": _frozen([hours_to_steps(g.min_down, dt) for g in self.generators], int),
            "init_status": _frozen([g.initial_status for g in self.generators], int),
            "init_up_steps": _frozen([elapsed_steps(g.initial_up_time, dt) for g in self.generators], int),
            "init_down_steps": _frozen([elapsed_steps(g.initial_down_time, dt) for g in self.generators], int),
        }
        for k, v in derived.items():
            object.__setattr__(self, k, v)

    @property
    def G(self) -> int:
        return len(self.generators)

    @property
    def T(self) -> int:
        return len(self.demand)

    @property
    def net_demand(self) -> np.ndarray:
        return self.demand - self.wind

    @property
    def forced_initial_steps(self) -> np.ndarray:
        """Leading steps each unit must keep its initial status."""
        rem = np.where(self.init_status == 1,
                       self.up_steps - self.init_up_steps,
                       self.down_steps - self.init_down_steps)
        return np.clip(rem, 0, self.T)

    @classmethod
    def from_fleet(cls, fleet: Sequence[Generator], demand, wind, *, dt: float = 0.5,
                   n_segments: int = DEFAULT_SEGMENTS, c_ls: float = 10_000.0, c_wc: float = 40.0,
                   demand_arma: ArmaSpec | None = None, wind_arma: ArmaSpec | None = None,
                   name: str = "") -> "ProblemInstance":
        return cls(tuple(fleet), tuple(piecewise_from_quadratic(g, n_segments) for g in fleet),
                   demand, wind, dt, c_ls, c_wc,
                   demand_arma or ArmaSpec(), wind_arma or ArmaSpec(), name)

    def with_forecasts(self, demand, wind, name: str | None = None) -> "ProblemInstance":
        return replace(self, demand=demand, wind=wind, name=self.name if name is None else name)

    def with_arma(self, demand_arma: ArmaSpec, wind_arma: ArmaSpec) -> "ProblemInstance":
        return replace(self, demand_arma=demand_arma, wind_arma=wind_arma)


def startups_shutdowns(u: np.ndarray, init_status: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    prev = np.concatenate([np.asarray(init_status).reshape(-1, 1), u[:, :-1]], axis=1)
    diff = u.astype(int) - prev.astype(int)
    return (diff > 0).astype(np.int8), (diff < 0).astype(np.int8)


@dataclass(frozen=True)
class Schedule:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "w"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int8))
        if self.u.ndim != 2 or self.u.shape != self.v.shape or self.u.shape != self.w.shape:
            raise InvalidArgument("u, v, w must be matrices of equal shape [G][T]")

    @classmethod
    def from_commitment(cls, u, init_status) -> "Schedule":
        u = np.asarray(u, dtype=np.int8)
        v, w = startups_shutdowns(u, init_status)
        return cls(u, v, w)

    @classmethod
    def all_on(cls, inst: ProblemInstance) -> "Schedule":
        return cls.from_commitment(np.ones((inst.G, inst.T), np.int8), inst.init_status)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def __eq__(self, other):
        return isinstance(other, Schedule) and np.array_equal(self.u, other.u) \
            and np.array_equal(self.v, other.v) and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash(self.u.tobytes())

    def to_csv(self, path) -> None:
        np.savetxt(path, self.u, fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path, init_status) -> "Schedule":
        u = np.loadtxt(path, delimiter=",", dtype=np.int8, ndmin=2)
        return cls.from_commitment(u, init_status)


class Violation(NamedTuple):
    generator: str
    t: int  # 1-based period
    constraint: str

    def __str__(self):
        return f"{self.constraint}@{self.generator},t={self.t}"


def validate_schedule(s: Schedule, inst: ProblemInstance) -> list[Violation]:
    """Check binary domain and the min up/down and transition constraints.

    Returns an empty list when the schedule is feasible.  Windows of the
    min up/down constraints are truncated at the horizon start, which is
    equivalent to the untruncated form whenever T covers the longest
    up/down time and stays exact for short horizons.
    """
    G, T = inst.G, inst.T
    if s.u.shape != (G, T):
        raise InvalidArgument(f"schedule shape {s.u.shape} != ({G}, {T})")
    out: list[Violation] = []
    ids = [g.id for g in inst.generators]
    for name, mat in (("binary-u", s.u), ("binary-v", s.v), ("binary-w", s.w)):
        bad = np.argwhere((mat != 0) & (mat != 1))
        out.extend(Violation(ids[g], t + 1, name) for g, t in bad)
    u, v, w = s.u.astype(int), s.v.astype(int), s.w.astype(int)
    forced = inst.forced_initial_steps
    for g in range(G):
        if inst.init_status[g]:
            for t in np.flatnonzero(u[g, :forced[g]] != 1):
                out.append(Violation(ids[g], t + 1, "A1"))
        else:
            for t in np.flatnonzero(u[g, :forced[g]] != 0):
                out.append(Violation(ids[g], t + 1, "A2"))
    trans = u - np.concatenate([inst.init_status.reshape(-1, 1), u[:, :-1]], axis=1)
    bad = np.argwhere(trans != v - w)
    out.extend(Violation(ids[g], t + 1, "A3" if t == 0 else "A4") for g, t in bad)
    cv = np.concatenate([np.zeros((G, 1), int), np.cumsum(v, axis=1)], axis=1)
    cw = np.concatenate([np.zeros((G, 1), int), np.cumsum(w, axis=1)], axis=1)
    idx = np.arange(T)
    for g in range(G):
        lo = np.maximum(0, idx - inst.up_steps[g] + 1)
        for t in np.flatnonzero(cv[g, idx + 1] - cv[g, lo] > u[g]):
            out.append(Violation(ids[g], t + 1, "A5"))
        lo = np.maximum(0, idx - inst.down_steps[g] + 1)
        for t in np.flatnonzero(cw[g, idx + 1] - cw[g, lo] > 1 - u[g]):
            out.append(Violation(ids[g], t + 1, "A6"))
    return sorted(out, key=lambda x: (x.t, ids.index(x.generator), x.constraint))


def is_feasible(s: Schedule, inst: ProblemInstance) -> bool:
    return not validate_schedule(s, inst)
