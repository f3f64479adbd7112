"""Best-bound branch and bound over the LP relaxation.

Branching defaults to reliability pseudocosts: a commitment bit's
pseudocosts are seeded by solving both child LPs (strong branching) until
it has been observed ``reliability`` times in each direction.  An
incumbent-guided rounding heuristic runs at every node.

One solver instance is single-threaded and owns its LP object; run several
instances in separate workers for concurrency.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..environment import repair_commitment
from ..errors import InfeasibleSchedule, InvalidArgument
from ..system import Schedule, Violation, validate_schedule
from .lp import OPTIMAL, LpRelaxation, _as_arrays
from .model import MipModel

INT_TOL = 1e-6
GAP_TOL = 1e-6

GAP_CLOSED, TIME_LIMIT, NODE_LIMIT, NO_SOLUTION = "gap-closed", "time-limit", "node-limit", "no-solution"
BRANCHING_RULES = ("pseudocost", "earliest", "fractional")


@dataclass(frozen=True)
class Budgets:
    """Search limits.  ``nodes`` counts LPs solved after the root."""
    nodes: int | None = None
    time_s: float | None = None


@dataclass
class SolveReport:
    incumbent: Schedule | None
    ub: float
    lb: float
    mip_gap: float
    nodes_explored: int
    wall_time: float
    gap_trace: list = field(default_factory=list)  # (time, ub, lb)
    termination: str = GAP_CLOSED
    warm_start_objective: float | None = None
    seed: int = 0
    strong_branching_lps: int = 0

    def to_dict(self, timing: bool = True) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else x
        d = {
            "ub": num(self.ub), "lb": num(self.lb), "mip_gap": num(self.mip_gap),
            "nodes_explored": self.nodes_explored, "termination": self.termination,
            "warm_start_objective": num(self.warm_start_objective), "seed": self.seed,
            "strong_branching_lps": self.strong_branching_lps,
            "incumbent": None if self.incumbent is None else self.incumbent.u.tolist(),
            "gap_trace": [[tt if timing else None, num(u), num(l)] for tt, u, l in self.gap_trace],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def mip_gap(ub: float, lb: float) -> float:
    """Relative gap in percent; zero once within the closing tolerance."""
    if not math.isfinite(ub):
        return math.inf
    if ub - lb <= GAP_TOL * max(1.0, abs(ub)):
        return 0.0
    return (ub - lb) / ub * 100.0


def schedule_objective(model: MipModel, s: Schedule, lp: LpRelaxation | None = None) -> float:
    """Model objective with every binary fixed to ``s``."""
    violations = validate_schedule(s, model.inst)
    if violations:
        raise InfeasibleSchedule(violations)
    idx, val = _as_arrays(model, model.fixings_for(s))
    sol = (lp or LpRelaxation(model)).solve(idx, val)
    if sol.status != OPTIMAL:
        raise InfeasibleSchedule([Violation("fleet", 0, "reserve")])
    return sol.objective


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    order: int
    fix_idx: tuple = field(compare=False)
    fix_val: tuple = field(compare=False)
    basis: object = field(compare=False, default=None)
    frac: float = field(compare=False, default=0.0)  # distance the branch moved the variable


class BranchAndBound:
    """Single-worker solver; ``solve`` may be called once per instance."""

    def __init__(self, model: MipModel, warm_start: Schedule | None = None,
                 budgets: Budgets = Budgets(), seed: int = 0, heuristic: bool = True,
                 branching: str = "pseudocost"):
        if branching not in BRANCHING_RULES:
            raise InvalidArgument(f"branching must be one of {BRANCHING_RULES}")
        self.branching = branching
        self.reliability = 2        # observations per direction before trusting a pseudocost
        self.strong_candidates = 8  # strong-branching candidates per node
        self.strong_lps = 0
        self.model = model
        self.warm_start = warm_start
        self.budgets = budgets
        self.seed = seed
        self.heuristic = heuristic
        self.rng = np.random.default_rng(seed)
        inst = model.inst
        G, T = inst.G, inst.T
        # branching order among equally fractional binaries: earliest t, then lowest g
        order = []
        for t in range(T):
            for g in range(G):
                order.extend([model.u_idx[g, t], model.v_idx[g, t], model.w_idx[g, t]])
        self._branch_order = np.array(order)
        self._u_order = model.u_idx.T.ravel()
        # pseudocosts per variable: [sum of gains per unit change, count] for down/up
        n = model.n_cols
        self._pc_sum = np.zeros((2, n))
        self._pc_cnt = np.zeros((2, n))

    def _integral(self, x) -> bool:
        b = x[self._branch_order]
        return bool(np.all(np.abs(b - np.round(b)) <= INT_TOL))

    def _choose(self, x, ctx=None) -> int:
        """Branching variable.

        ``fractional`` takes the most fractional of all binaries.  The other
        rules consider commitment bits first and fall back to startup and
        shutdown bits.  Ties go to the earliest period, then lowest unit.
        """
        b = x[self._u_order]
        f = b - np.floor(b)
        cand = np.flatnonzero(np.minimum(f, 1 - f) > INT_TOL)
        if len(cand) == 0 or self.branching == "fractional":
            b = x[self._branch_order]
            frac = np.abs(b - np.round(b))
            return int(self._branch_order[int(np.argmax(frac))])
        if self.branching == "earliest":
            return int(self._u_order[cand[0]])
        cols = self._u_order[cand]
        fc = f[cand]
        if ctx is not None:
            hit = self._strong_branch(cols, fc, ctx)
            if hit is not None:
                return hit
        down, up = self._pseudocosts(cols)
        score = np.maximum(fc * down, 1e-9) * np.maximum((1 - fc) * up, 1e-9)
        return int(cols[int(np.argmax(score))])

    def _strong_branch(self, cols, fc, ctx):
        """Initialise pseudocosts of unseen candidates by solving both children.

        Returns a variable immediately when one of its children is infeasible
        (or cannot beat the incumbent), since branching on it prunes a side.
        """
        lp, fix_idx, fix_val, parent_obj, basis, cutoff = ctx
        unseen = np.flatnonzero(np.minimum(self._pc_cnt[0, cols], self._pc_cnt[1, cols]) < self.reliability)
        if len(unseen) == 0:
            return None
        # most fractional first, earliest as tie-break; cap the work per node
        order = sorted(unseen, key=lambda k: (-min(fc[k], 1 - fc[k]), k))[:self.strong_candidates]
        for k in order:
            j = int(cols[k])
            for d in (0, 1):
                sol = lp.solve(fix_idx + (j,), fix_val + (d,), basis)
                self.strong_lps += 1
                if sol.status != OPTIMAL or sol.objective >= cutoff:
                    return j
                dist = fc[k] if d == 0 else 1 - fc[k]
                self._pc_sum[d, j] += max(sol.objective - parent_obj, 0.0) / dist
                self._pc_cnt[d, j] += 1
        return None

    def _pseudocosts(self, cols):
        """Mean objective gain per unit change; unseen variables take the average."""
        out = []
        for d in (0, 1):
            s, c = self._pc_sum[d], self._pc_cnt[d]
            avg = s.sum() / c.sum() if c.sum() else 1.0
            cc = c[cols]
            out.append(np.where(cc > 0, s[cols] / np.maximum(cc, 1), avg))
        return out

    def _update_pseudocost(self, node: "_Node", objective: float) -> None:
        if not node.fix_idx or node.frac <= INT_TOL:
            return
        j, d = node.fix_idx[-1], node.fix_val[-1]
        gain = max(objective - node.bound, 0.0) if math.isfinite(objective) else None
        if gain is None:
            return
        self._pc_sum[d, j] += gain / node.frac
        self._pc_cnt[d, j] += 1

    def _round(self, x, incumbent: Schedule | None) -> Schedule:
        """Incumbent-guided rounding followed by a min up/down repair walk."""
        uf = x[self.model.u_idx]
        theta = self.rng.uniform(0.1, 0.5)
        guide = incumbent.u if incumbent is not None else np.ones_like(uf, dtype=np.int8)
        desired = np.where(uf >= 1 - theta, 1, np.where(uf <= theta, 0, guide))
        return repair_commitment(self.model.inst, desired)

    def solve(self) -> SolveReport:
        model = self.model
        t0 = time.perf_counter()
        lp = LpRelaxation(model)
        incumbent, ub, ws_obj = None, math.inf, None
        if self.warm_start is not None:
            ws_obj = schedule_objective(model, self.warm_start, lp)
            incumbent, ub = self.warm_start, ws_obj
        else:
            # all units on, except where initial min down times hold them off
            start = repair_commitment(model.inst, np.ones(model.u_idx.shape, np.int8))
            sol = lp.solve(*_as_arrays(model, model.fixings_for(start)))
            if sol.status == OPTIMAL:
                incumbent, ub = start, sol.objective
        trace = []
        lb = -math.inf

        def record():
            trace.append((time.perf_counter() - t0, ub, lb))

        root = lp.solve()
        nodes = 0
        heap: list[_Node] = []
        counter = itertools.count()
        if root.status == OPTIMAL:
            lb = min(root.objective, ub)
        elif incumbent is not None:
            lb = ub
        record()

        def process(sol, fix_idx, fix_val, depth):
            nonlocal incumbent, ub
            if sol.status != OPTIMAL or sol.objective >= ub - GAP_TOL * max(1.0, abs(ub)):
                return
            x = sol.x
            if self._integral(x):
                incumbent = Schedule.from_commitment(np.round(x[model.u_idx]).astype(np.int8),
                                                     model.inst.init_status)
                ub = sol.objective
                return
            if self.heuristic:
                cand = self._round(x, incumbent)
                cost = model.fixed_cost(cand.u)
                if cost < ub - GAP_TOL * max(1.0, abs(ub)):
                    incumbent, ub = cand, cost
            ctx = None
            if self.branching == "pseudocost":
                ctx = (lp, fix_idx, fix_val, sol.objective, sol.basis, ub - GAP_TOL * max(1.0, abs(ub)))
            j = self._choose(x, ctx)
            for val in (1, 0):
                heapq.heappush(heap, _Node(sol.objective, -(depth + 1), next(counter),
                                           fix_idx + (j,), fix_val + (val,), sol.basis,
                                           abs(val - float(x[j]))))

        # a zero node budget returns the initial incumbent with the root bound
        zero_budget = self.budgets.nodes == 0
        if root.status == OPTIMAL and not zero_budget:
            process(root, (), (), 0)
        termination = None
        if zero_budget:
            if incumbent is None:
                termination = NO_SOLUTION if root.status != OPTIMAL else NODE_LIMIT
            else:
                termination = GAP_CLOSED if mip_gap(ub, lb) == 0.0 else NODE_LIMIT
        while termination is None:
            if heap and heap[0].bound >= ub - GAP_TOL * max(1.0, abs(ub)):
                heap.clear()  # the smallest bound cannot beat the incumbent, so none can
            new_lb = min(heap[0].bound, ub) if heap else ub
            if new_lb != lb or (trace and trace[-1][1] != ub):
                lb = max(lb, new_lb)
                record()
            if not heap or mip_gap(ub, lb) == 0.0:
                termination = GAP_CLOSED if incumbent is not None else NO_SOLUTION
                break
            if self.budgets.nodes is not None and nodes >= self.budgets.nodes:
                termination = NODE_LIMIT
                break
            if self.budgets.time_s is not None and time.perf_counter() - t0 >= self.budgets.time_s:
                termination = TIME_LIMIT
                break
            node = heapq.heappop(heap)
            sol = lp.solve(node.fix_idx, node.fix_val, node.basis)
            nodes += 1
            if sol.status == OPTIMAL:
                self._update_pseudocost(node, sol.objective)
            process(sol, node.fix_idx, node.fix_val, -node.neg_depth)
        if termination == GAP_CLOSED:
            lb = ub
        return SolveReport(incumbent, ub, lb, mip_gap(ub, lb), nodes, time.perf_counter() - t0,
                           trace, termination, ws_obj, self.seed, self.strong_lps)


def branch_and_bound(model: MipModel, warm_start: Schedule | None = None, budgets: Budgets = Budgets(),
                     seed: int = 0, heuristic: bool = True, branching: str = "pseudocost") -> SolveReport:
    """Solve ``model`` to optimality or budget exhaustion.

    The warm start (or, without one, the all-on commitment) seeds the upper
    bound, so the returned incumbent is never worse than it.
    """
    if warm_start is not None and warm_start.u.shape != model.u_idx.shape:
        raise InvalidArgument("warm start shape does not match model")
    return BranchAndBound(model, warm_start, budgets, seed, heuristic, branching).solve()
