"""Deterministic and scenario-tree unit commitment MIP models."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..dispatch import MeritOrder
from ..errors import InvalidArgument, UnsupportedTreeSize
from ..forecast import ScenarioTree
from ..system import ProblemInstance

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MipModel:
    """Immutable MIP in column-compressed form.

    Binaries u, v, w are shared by every scenario; each scenario carries its
    own dispatch variables.  ``reserve`` is set only in deterministic mode.
    """
    inst: ProblemInstance
    mode: str
    probabilities: np.ndarray
    ndfe: np.ndarray            # [T, N]
    reserve: np.ndarray | None  # [T] or None
    c: np.ndarray
    A: sp.csc_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray
    u_idx: np.ndarray           # [G, T]
    v_idx: np.ndarray
    w_idx: np.ndarray
    p_idx: np.ndarray           # [G, T, N]
    lam_idx: tuple              # per g: array [T, N, L_g]
    ls_idx: np.ndarray          # [T, N]
    wc_idx: np.ndarray
    r_idx: np.ndarray | None    # [G, T]
    row_names: tuple = field(repr=False, default=())
    _merit: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cols(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_scenarios(self) -> int:
        return len(self.probabilities)

    @property
    def binary_idx(self) -> np.ndarray:
        return np.concatenate([self.u_idx.ravel(), self.v_idx.ravel(), self.w_idx.ravel()])

    @property
    def n_binaries(self) -> int:
        return 3 * self.u_idx.size

    @property
    def n_continuous(self) -> int:
        return self.n_cols - self.n_binaries

    def fixings_for(self, schedule) -> dict[int, int]:
        """Fix every binary to the schedule's u, v, w values."""
        idx = np.concatenate([self.u_idx.ravel(), self.v_idx.ravel(), self.w_idx.ravel()])
        val = np.concatenate([schedule.u.ravel(), schedule.v.ravel(), schedule.w.ravel()])
        return dict(zip(idx.tolist(), val.astype(int).tolist()))

    def merit(self, col: np.ndarray) -> MeritOrder:
        key = np.asarray(col, np.int8).tobytes()
        mo = self._merit.get(key)
        if mo is None:
            inst = self.inst
            mo = self._merit[key] = MeritOrder([pc for pc, on in zip(inst.costs, col) if on], inst.c_ls)
        return mo

    def fixed_cost(self, u: np.ndarray) -> float:
        """Objective at a fixed integral commitment, by per-period dispatch.

        Equals the LP optimum with all binaries fixed (v, w taken as the
        transitions of u).  Returns ``inf`` when the reserve requirement is
        not met.  Does not check min up/down feasibility.
        """
        inst = self.inst
        u = np.asarray(u, np.int8)
        prev = np.concatenate([inst.init_status.reshape(-1, 1), u[:, :-1]], axis=1)
        total = float((inst.startup_arr[:, None] * ((u == 1) & (prev == 0))).sum())
        cap = inst.p_max_arr - inst.p_min_arr
        base = inst.demand - inst.wind
        for t in range(inst.T):
            mo = self.merit(u[:, t])
            nets = base[t] + self.ndfe[t]
            if self.reserve is None:
                cost, _, _ = mo.costs(nets, inst.dt, inst.c_ls, inst.c_wc)
            else:
                spare = float(cap[u[:, t] == 1].sum()) - self.reserve[t]
                if spare < -1e-7 * max(1.0, self.reserve[t]):
                    return math.inf
                limit = min(mo.headroom, max(spare, 0.0))
                residual = nets - mo.min_total
                shed = np.maximum(residual - limit, 0.0)
                curtail = np.maximum(-residual, 0.0)
                var = mo.variable_cost(np.minimum(residual, limit))
                cost = mo.no_load + inst.dt * (inst.c_ls * shed + inst.c_wc * curtail + var)
            total += float(np.dot(self.probabilities, cost))
        return total

    def to_lp_text(self) -> str:
        """CPLEX LP-format dump for cross-checking with external solvers."""
        names = _column_names(self)
        out = ["\\* unit commitment model: mode=%s, scenarios=%d *\\" % (self.mode, self.n_scenarios),
               "Minimize", " obj: " + _linear(names, np.flatnonzero(self.c), self.c[np.flatnonzero(self.c)]),
               "Subject To"]
        A = self.A.tocsr()
        for i in range(self.n_rows):
            cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
            vals = A.data[A.indptr[i]:A.indptr[i + 1]]
            lo, hi = self.row_lower[i], self.row_upper[i]
            expr = _linear(names, cols, vals)
            rn = self.row_names[i] if self.row_names else f"r{i}"
            if lo == hi:
                out.append(f" {rn}: {expr} = {_num(lo)}")
            else:
                if np.isfinite(lo):
                    out.append(f" {rn}_lo: {expr} >= {_num(lo)}")
                if np.isfinite(hi):
                    out.append(f" {rn}_hi: {expr} <= {_num(hi)}")
        out.append("Bounds")
        for j in range(self.n_cols):
            lo, hi = self.col_lower[j], self.col_upper[j]
            out.append(f" {_num(lo)} <= {names[j]} <= {_num(hi)}" if np.isfinite(hi) else f" {names[j]} >= {_num(lo)}")
        out.append("Binary")
        out.extend(" " + names[j] for j in self.binary_idx)
        out.append("End")
        return "\n".join(out) + "\n"


def _num(x) -> str:
    return repr(float(x))


def _linear(names, cols, vals) -> str:
    terms = [f"{'+' if v >= 0 else '-'} {_num(abs(v))} {names[j]}" for j, v in zip(cols, vals)]
    return " ".join(terms) if terms else "0"


def _column_names(m: MipModel) -> list[str]:
    names = [""] * m.n_cols
    G, T = m.u_idx.shape
    for g in range(G):
        for t in range(T):
            names[m.u_idx[g, t]] = f"u_{g}_{t}"
            names[m.v_idx[g, t]] = f"v_{g}_{t}"
            names[m.w_idx[g, t]] = f"w_{g}_{t}"
            if m.r_idx is not None:
                names[m.r_idx[g, t]] = f"r_{g}_{t}"
            for n in range(m.n_scenarios):
                names[m.p_idx[g, t, n]] = f"p_{g}_{t}_{n}"
                for l, j in enumerate(m.lam_idx[g][t, n]):
                    names[j] = f"lam_{g}_{t}_{n}_{l}"
    for t in range(T):
        for n in range(m.n_scenarios):
            names[m.ls_idx[t, n]] = f"ls_{t}_{n}"
            names[m.wc_idx[t, n]] = f"wc_{t}_{n}"
    return names


class _Builder:
    def __init__(self):
        self.n = 0
        self.c, self.lo, self.hi = [], [], []
        self.rows, self.cols, self.vals = [], [], []
        self.rlo, self.rhi, self.rnames = [], [], []

    def add_vars(self, shape, cost, lo, hi) -> np.ndarray:
        k = int(np.prod(shape))
        idx = np.arange(self.n, self.n + k).reshape(shape)
        self.n += k
        self.c.append(np.broadcast_to(np.asarray(cost, float), shape).ravel())
        self.lo.append(np.full(k, lo, float))
        self.hi.append(np.full(k, hi, float))
        return idx

    def add_row(self, cols, vals, lo, hi, name) -> None:
        i = len(self.rlo)
        cols = np.asarray(cols, int).ravel()
        self.rows.append(np.full(len(cols), i))
        self.cols.append(cols)
        self.vals.append(np.broadcast_to(np.asarray(vals, float), cols.shape).ravel())
        self.rlo.append(lo)
        self.rhi.append(hi)
        self.rnames.append(name)

    def matrix(self):
        A = sp.csc_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(len(self.rlo), self.n))
        A.sum_duplicates()
        return (np.concatenate(self.c), A, np.array(self.rlo, float), np.array(self.rhi, float),
                np.concatenate(self.lo), np.concatenate(self.hi))


def _build(inst: ProblemInstance, probabilities, ndfe, reserve, mode: str) -> MipModel:
    G, T, dt = inst.G, inst.T, inst.dt
    N = len(probabilities)
    phi = np.asarray(probabilities, float)
    b = _Builder()
    u = b.add_vars((G, T), inst.no_load_arr[:, None], 0.0, 1.0)
    v = b.add_vars((G, T), inst.startup_arr[:, None], 0.0, 1.0)
    w = b.add_vars((G, T), 0.0, 0.0, 1.0)
    p = np.empty((G, T, N), int)
    lam = []
    ls = np.empty((T, N), int)
    wc = np.empty((T, N), int)
    for n in range(N):
        p[:, :, n] = b.add_vars((G, T), 0.0, 0.0, np.inf)
    for g, pc in enumerate(inst.costs):
        L = len(pc.points)
        cost = phi[None, :, None] * dt * (pc.CP - pc.CP[0])[None, None, :]
        lam.append(b.add_vars((T, N, L), np.broadcast_to(cost, (T, N, L)), 0.0, 1.0))
    for n in range(N):
        ls[:, n] = b.add_vars((T,), phi[n] * dt * inst.c_ls, 0.0, np.inf)
        wc[:, n] = b.add_vars((T,), phi[n] * dt * inst.c_wc, 0.0, np.inf)
    r = b.add_vars((G, T), 0.0, 0.0, np.inf) if reserve is not None else None

    for g, pc in enumerate(inst.costs):
        dP = pc.P - pc.P[0]
        for t in range(T):
            for n in range(N):
                lam_gtn = lam[g][t, n]
                b.add_row(np.r_[p[g, t, n], lam_gtn], np.r_[1.0, -dP], 0.0, 0.0, f"pwl_p_{g}_{t}_{n}")
                b.add_row(np.r_[lam_gtn, u[g, t]], np.r_[np.ones(len(lam_gtn)), -1.0], 0.0, 0.0,
                          f"pwl_sum_{g}_{t}_{n}")
    base = inst.demand - inst.wind
    for t in range(T):
        for n in range(N):
            rhs = base[t] + ndfe[t, n]
            b.add_row(np.r_[ls[t, n], wc[t, n], u[:, t], p[:, t, n]],
                      np.r_[1.0, -1.0, inst.p_min_arr, np.ones(G)], rhs, rhs, f"balance_{t}_{n}")
    forced = inst.forced_initial_steps
    for g in range(G):
        k = forced[g]
        if k > 0:
            if inst.init_status[g]:
                b.add_row(u[g, :k], 1.0, float(k), float(k), f"A1_{g}")
            else:
                b.add_row(u[g, :k], 1.0, 0.0, 0.0, f"A2_{g}")
        U1 = float(inst.init_status[g])
        b.add_row([u[g, 0], v[g, 0], w[g, 0]], [1.0, -1.0, 1.0], U1, U1, f"A3_{g}")
        for t in range(1, T):
            b.add_row([u[g, t], u[g, t - 1], v[g, t], w[g, t]], [1.0, -1.0, -1.0, 1.0], 0.0, 0.0, f"A4_{g}_{t}")
        UT, DT = inst.up_steps[g], inst.down_steps[g]
        for t in range(T):
            lo = max(0, t - UT + 1)
            b.add_row(np.r_[v[g, lo:t + 1], u[g, t]], np.r_[np.ones(t + 1 - lo), -1.0], -np.inf, 0.0, f"A5_{g}_{t}")
            lo = max(0, t - DT + 1)
            b.add_row(np.r_[w[g, lo:t + 1], u[g, t]], np.r_[np.ones(t + 1 - lo), 1.0], -np.inf, 1.0, f"A6_{g}_{t}")
    if reserve is not None:
        cap = inst.p_max_arr - inst.p_min_arr
        for t in range(T):
            b.add_row(r[:, t], 1.0, float(reserve[t]), np.inf, f"reserve_{t}")
            for g in range(G):
                b.add_row([p[g, t, 0], r[g, t], u[g, t]], [1.0, 1.0, -cap[g]], -np.inf, 0.0, f"headroom_{g}_{t}")
    c, A, rlo, rhi, clo, chi = b.matrix()
    return MipModel(inst, mode, phi, np.asarray(ndfe, float), None if reserve is None else np.asarray(reserve, float),
                    c, A, rlo, rhi, clo, chi, u, v, w, p, tuple(lam), ls, wc, r, tuple(b.rnames))


def build_smip(inst: ProblemInstance, tree: ScenarioTree, min_scenarios: int = 4) -> MipModel:
    """Scenario-weighted model: one commitment shared by all NDFE scenarios.

    ``min_scenarios`` guards against degenerate quantile trees; pass 1 to
    build from a single-scenario tree (e.g. a perfect-foresight realisation).
    """
    if tree.ndfe.shape[0] != inst.T:
        raise InvalidArgument("scenario tree horizon does not match instance")
    if tree.n_scenarios < min_scenarios:
        raise UnsupportedTreeSize(f"scenario tree has {tree.n_scenarios} < {min_scenarios} scenarios")
    return _build(inst, tree.probabilities, tree.ndfe, None, "stochastic")


def build_dmip(inst: ProblemInstance, reserve) -> MipModel:
    """Single zero-error scenario with an explicit spinning reserve requirement."""
    reserve = np.broadcast_to(np.asarray(reserve, float), (inst.T,)).copy()
    if np.any(reserve < 0):
        raise InvalidArgument("reserve requirement must be non-negative")
    cap = float((inst.p_max_arr - inst.p_min_arr).sum())
    if np.any(reserve > cap):
        log.warning("reserve exceeds fleet headroom %.1f MW at %d periods; model may be infeasible",
                    cap, int((reserve > cap).sum()))
    return _build(inst, np.array([1.0]), np.zeros((inst.T, 1)), reserve, "deterministic")


def reserve_from_std(sigma, multiplier: float = 4.0) -> np.ndarray:
    return multiplier * np.asarray(sigma, float)
