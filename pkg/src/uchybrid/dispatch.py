"""Single-period economic dispatch over piecewise-linear convex costs.

With piecewise-linear costs the lambda iteration is exact: segments are
filled in ascending slope order until the residual demand above the
committed minimum outputs is met.  Load shedding acts as an unbounded
segment priced at ``c_ls``; demand below the committed minimum is met by
curtailing wind at ``c_wc``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .system import PiecewiseCost


@dataclass(frozen=True)
class DispatchResult:
    p_g: np.ndarray          # MW above minimum, per committed unit
    load_shed: float
    wind_curtail: float
    fuel_cost: float         # no-load terms plus dt * C_g(p)
    marginal_lambda: float | None  # None while shedding or curtailing


class MeritOrder:
    """Sorted segment stack of a fixed committed set.

    Building it once lets many net-demand values be dispatched against the
    same commitment (see :meth:`costs`).
    """

    def __init__(self, committed: Sequence[PiecewiseCost], c_ls: float = 10_000.0):
        self.committed = tuple(committed)
        self.c_ls = float(c_ls)
        self.min_total = float(sum(pc.p_min for pc in self.committed))
        self.no_load = float(sum(pc.no_load for pc in self.committed))
        if self.committed:
            slopes = np.concatenate([pc.slopes for pc in self.committed])
            widths = np.concatenate([pc.widths for pc in self.committed])
            owner = np.concatenate([np.full(len(pc.widths), k) for k, pc in enumerate(self.committed)])
        else:
            slopes = widths = np.zeros(0)
            owner = np.zeros(0, int)
        # segments dearer than shedding are never used
        keep = slopes < self.c_ls
        slopes, widths, owner = slopes[keep], widths[keep], owner[keep]
        order = np.argsort(slopes, kind="stable")
        self.slopes = slopes[order]
        self.widths = widths[order]
        self.owner = owner[order]
        # group equal slopes so ties split pro rata by width
        self.levels, start = np.unique(self.slopes, return_index=True)
        self.level_width = np.add.reduceat(self.widths, start) if len(start) else np.zeros(0)
        self.cum_width = np.r_[0.0, np.cumsum(self.level_width)]
        self.cum_cost = np.r_[0.0, np.cumsum(self.level_width * self.levels)]
        self.headroom = float(self.cum_width[-1])

    def allocate(self, residual: float):
        """Per-unit output above minimum, shed and curtailment for one residual."""
        n = len(self.committed)
        p = np.zeros(n)
        if residual < 0:
            return p, 0.0, -float(residual), None
        if residual > self.headroom:
            for k, w in zip(self.owner, self.widths):
                p[k] += w
            return p, float(residual - self.headroom), 0.0, None
        # bisection over the sorted level capacities
        j = int(np.searchsorted(self.cum_width, residual, side="left"))
        if j == 0:
            lam = float(self.levels[0]) if len(self.levels) else None
            return p, 0.0, 0.0, lam
        level = self.levels[j - 1]
        frac = (residual - self.cum_width[j - 1]) / self.level_width[j - 1]
        for k, s, w in zip(self.owner, self.slopes, self.widths):
            if s < level:
                p[k] += w
            elif s == level:
                p[k] += frac * w
        return p, 0.0, 0.0, float(level)

    def variable_cost(self, residual):
        """Sum of C_g over the committed set at the cheapest allocation (vectorised)."""
        r = np.clip(np.asarray(residual, dtype=float), 0.0, self.headroom)
        return np.interp(r, self.cum_width, self.cum_cost)

    def costs(self, net_demand, dt: float, c_ls: float, c_wc: float):
        """Period cost excluding startups, for an array of net-demand values.

        Returns (cost, shed MW, curtail MW) arrays.
        """
        residual = np.asarray(net_demand, dtype=float) - self.min_total
        shed = np.maximum(residual - self.headroom, 0.0)
        curtail = np.maximum(-residual, 0.0)
        cost = self.no_load + dt * (c_ls * shed + c_wc * curtail + self.variable_cost(residual))
        return cost, shed, curtail


def dispatch(committed: Sequence[PiecewiseCost], net_demand: float, dt: float,
             c_ls: float = 10_000.0, c_wc: float = 40.0) -> DispatchResult:
    """Least-cost dispatch of the committed units for one period."""
    mo = MeritOrder(committed, c_ls)
    residual = float(net_demand) - mo.min_total
    p, shed, curtail, lam = mo.allocate(residual)
    var = sum(pc.cost_above_min(x) for pc, x in zip(committed, p))
    fuel = mo.no_load + dt * float(var)
    return DispatchResult(p, shed, curtail, fuel, lam)


def period_cost(committed: Sequence[PiecewiseCost], result: DispatchResult, startup_costs: Sequence[float],
                dt: float, c_ls: float = 10_000.0, c_wc: float = 40.0) -> float:
    """Period cost: startups, no-load, fuel above minimum, shed and curtailment penalties.

    ``startup_costs`` lists the startup cost of each unit starting this period.
    """
    var = sum(float(pc.cost_above_min(x)) for pc, x in zip(committed, result.p_g))
    no_load = sum(pc.no_load for pc in committed)
    return float(sum(startup_costs)) + no_load + dt * (c_ls * result.load_shed + c_wc * result.wind_curtail + var)
