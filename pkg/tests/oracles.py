"""Independent reference implementations used only by the tests.

Nothing here calls the package's dispatch, feasibility or MIP code: the
oracles read raw instance data (breakpoints, limits, times) and solve by
brute force or with scipy's LP solver.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


# -- feasibility by run lengths ------------------------------------------------

def steps(hours, dt):
    return max(1, math.ceil(hours / dt - 1e-9))


def runs_feasible(u_row, init_on, init_elapsed, up, down) -> bool:
    """Min up/down check phrased as run lengths of the on/off sequence."""
    T = len(u_row)
    need = (up if init_on else down) - init_elapsed
    if need > 0 and any(u_row[t] != init_on for t in range(min(need, T))):
        return False
    prev = init_on
    for t in range(T):
        if u_row[t] != prev:
            hold = up if u_row[t] else down
            if any(u_row[k] != u_row[t] for k in range(t, min(t + hold, T))):
                return False
        prev = u_row[t]
    return True


def unit_rows(gen, dt, T):
    """Every feasible on/off sequence of one unit over T periods."""
    init_on = int(gen.initial_status)
    elapsed = int(math.floor((gen.initial_up_time if init_on else gen.initial_down_time) / dt + 1e-9))
    up, down = steps(gen.min_up, dt), steps(gen.min_down, dt)
    return [row for row in itertools.product((0, 1), repeat=T) if runs_feasible(row, init_on, elapsed, up, down)]


# -- single-period dispatch by LP --------------------------------------------------

def period_lp(costs, committed, net, dt, c_ls, c_wc, reserve=None):
    """Min period cost (excluding startups) via scipy's HiGHS LP interface.

    Variables: one per segment of each committed unit, then shed and
    curtailment.  Returns inf if the reserve cannot be held.
    """
    segs_w, segs_c = [], []
    min_total = no_load = cap = 0.0
    for pc, on in zip(costs, committed):
        if not on:
            continue
        P = np.array([p for p, _ in pc.points])
        C = np.array([c for _, c in pc.points])
        segs_w.extend(np.diff(P))
        segs_c.extend(np.diff(C) / np.diff(P))
        min_total += P[0]
        no_load += C[0]
        cap += P[-1] - P[0]
    k = len(segs_w)
    c = np.r_[np.array(segs_c) * dt, c_ls * dt, c_wc * dt]
    A_eq = np.r_[np.ones(k), 1.0, -1.0][None, :]
    b_eq = [net - min_total]
    A_ub = b_ub = None
    if reserve is not None:
        if cap < reserve - 1e-9:
            return math.inf
        A_ub = np.r_[np.ones(k), 0.0, 0.0][None, :]
        b_ub = [cap - reserve]
    bounds = [(0, w) for w in segs_w] + [(0, None), (0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return math.inf
    return no_load + res.fun


def enumerate_uc(inst, probabilities, ndfe, reserve=None):
    """Exhaustive optimum over all feasible commitment matrices.

    ``ndfe`` is [T, N].  Returns (best cost, best u) with u as an int array.
    """
    G, T = len(inst.generators), len(inst.demand)
    dt = inst.dt
    rows = [unit_rows(g, dt, T) for g in inst.generators]
    base = np.asarray(inst.demand) - np.asarray(inst.wind)
    cache = {}

    def period(t, col):
        key = (t, col)
        if key not in cache:
            total = 0.0
            for n, phi in enumerate(probabilities):
                r = None if reserve is None else float(reserve[t])
                total += phi * period_lp(inst.costs, col, base[t] + ndfe[t, n], dt, inst.c_ls, inst.c_wc, r)
            cache[key] = total
        return cache[key]

    best, best_u = math.inf, None
    for combo in itertools.product(*rows):
        u = np.array(combo, int)
        cost = 0.0
        for g, gen in enumerate(inst.generators):
            last = gen.initial_status
            for t in range(T):
                if u[g, t] and not last:
                    cost += gen.startup_cost
                last = u[g, t]
        for t in range(T):
            cost += period(t, tuple(u[:, t]))
            if cost >= best:
                break
        if cost < best:
            best, best_u = cost, u
    return best, best_u


# -- dispatch by vertex enumeration --------------------------------------------------

def dispatch_vertices(widths, slopes, residual, dt, c_ls, c_wc):
    """Optimal single-period cost above minimum by enumerating LP vertices.

    At a vertex of {sum x + shed - curtail = residual, 0 <= x <= w} every
    segment is empty or full except at most one basic variable, which is a
    partially loaded segment, the shed, or the curtailment.
    Returns (cost, x, shed, curtail).
    """
    widths = np.asarray(widths, float)
    slopes = np.asarray(slopes, float)
    k = len(widths)
    pats = np.array(list(itertools.product((0, 1), repeat=k)), float).reshape(-1, k)
    full = pats @ widths
    best = (math.inf, None, 0.0, 0.0)
    # basic shed or curtailment
    for sign, price in ((1.0, c_ls), (-1.0, c_wc)):
        slack = sign * (residual - full)
        ok = slack >= -1e-12
        cost = dt * (pats @ (slopes * widths) + price * np.maximum(slack, 0.0))
        cost[~ok] = math.inf
        i = int(np.argmin(cost))
        if cost[i] < best[0]:
            s = max(slack[i], 0.0)
            best = (cost[i], pats[i] * widths, s if sign > 0 else 0.0, s if sign < 0 else 0.0)
    # basic partial segment j
    for j in range(k):
        rest = pats[:, j] == 0
        amt = residual - full
        ok = rest & (amt >= -1e-12) & (amt <= widths[j] + 1e-12)
        cost = dt * (pats @ (slopes * widths) + slopes[j] * amt)
        cost[~ok] = math.inf
        i = int(np.argmin(cost))
        if cost[i] < best[0]:
            x = pats[i] * widths
            x[j] = min(max(amt[i], 0.0), widths[j])
            best = (cost[i], x, 0.0, 0.0)
    return best


# -- numerical derivatives -------------------------------------------------------------

def central_difference(f, x, h=1e-6):
    """Gradient of scalar ``f`` at flat vector ``x`` by central differences."""
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / scale)
