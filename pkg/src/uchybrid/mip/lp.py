"""LP relaxation of a :class:`MipModel` with binaries optionally fixed.

Backed by the HiGHS dual simplex.  One :class:`LpRelaxation` owns one
solver object and is reused across branch-and-bound nodes, re-solving from
the parent's basis after the node's bound changes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import highspy
import numpy as np

from ..errors import InvalidArgument
from .model import MipModel

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LpSolution:
    objective: float
    x: np.ndarray | None
    status: str
    basis: object = None


def _as_arrays(model: MipModel, fixings) -> tuple[np.ndarray, np.ndarray]:
    if fixings is None:
        return np.zeros(0, int), np.zeros(0)
    if isinstance(fixings, Mapping):
        items = list(fixings.items())
    else:
        items = list(fixings)
        seen: dict[int, int] = {}
        for j, val in items:
            if seen.setdefault(int(j), int(val)) != int(val):
                raise InvalidArgument(f"variable {j} fixed both ways")
    idx = np.array([int(j) for j, _ in items], dtype=np.int32)
    val = np.array([float(v) for _, v in items])
    if np.any((val != 0) & (val != 1)):
        raise InvalidArgument("binary fixings must be 0 or 1")
    if len(idx) and not np.isin(idx, model.binary_idx).all():
        raise InvalidArgument("only binary variables can be fixed")
    return idx, val


class LpRelaxation:
    def __init__(self, model: MipModel):
        self.model = model
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        A = model.A
        lp.num_col_ = model.n_cols
        lp.num_row_ = model.n_rows
        lp.col_cost_ = model.c
        lp.col_lower_ = model.col_lower
        lp.col_upper_ = model.col_upper
        lp.row_lower_ = np.where(np.isfinite(model.row_lower), model.row_lower, -highspy.kHighsInf)
        lp.row_upper_ = np.where(np.isfinite(model.row_upper), model.row_upper, highspy.kHighsInf)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self.h = h
        self._bin = model.binary_idx.astype(np.int32)
        self._pos = {int(j): k for k, j in enumerate(self._bin)}
        self.iterations = 0

    def solve(self, fix_idx=(), fix_val=(), basis=None) -> LpSolution:
        lo = np.zeros(len(self._bin))
        hi = np.ones(len(self._bin))
        for j, val in zip(np.asarray(fix_idx, int).tolist(), np.asarray(fix_val, float).tolist()):
            k = self._pos[j]
            lo[k] = hi[k] = val
        h = self.h
        h.changeColsBounds(len(self._bin), self._bin, lo, hi)
        if basis is not None:
            h.setBasis(basis)
        h.run()
        status = h.getModelStatus()
        self.iterations += h.getInfo().simplex_iteration_count
        if status == highspy.HighsModelStatus.kOptimal:
            x = np.array(h.getSolution().col_value)
            return LpSolution(float(h.getInfo().objective_function_value), x, OPTIMAL, h.getBasis())
        if status == highspy.HighsModelStatus.kUnbounded:
            return LpSolution(-np.inf, None, UNBOUNDED)
        if status in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # a stale basis from an infeasible solve must not seed the next node
            h.clearSolver()
            return LpSolution(np.inf, None, INFEASIBLE)
        # numerical trouble: retry cold once
        h.clearSolver()
        h.run()
        if h.getModelStatus() == highspy.HighsModelStatus.kOptimal:
            x = np.array(h.getSolution().col_value)
            return LpSolution(float(h.getInfo().objective_function_value), x, OPTIMAL, h.getBasis())
        h.clearSolver()
        return LpSolution(np.inf, None, INFEASIBLE)


def solve_lp_relaxation(model: MipModel, fixings=None) -> LpSolution:
    """Solve the continuous relaxation with the given binaries fixed.

    ``fixings`` maps variable index to 0/1 (or is a sequence of pairs).
    """
    idx, val = _as_arrays(model, fixings)
    return LpRelaxation(model).solve(idx, val)
