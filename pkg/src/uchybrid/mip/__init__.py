"""Unit commitment MIP models and the branch-and-bound solver."""
from .model import MipModel, build_dmip, build_smip, reserve_from_std
from .lp import LpRelaxation, LpSolution, solve_lp_relaxation
from .bnb import (GAP_CLOSED, NODE_LIMIT, NO_SOLUTION, TIME_LIMIT, Budgets, SolveReport, branch_and_bound,
                  mip_gap, schedule_objective)

__all__ = ["MipModel", "build_dmip", "build_smip", "reserve_from_std", "LpRelaxation", "LpSolution",
           "solve_lp_relaxation", "Budgets", "SolveReport", "branch_and_bound", "mip_gap",
           "schedule_objective", "GAP_CLOSED", "NODE_LIMIT", "NO_SOLUTION", "TIME_LIMIT"]
