import math

import highspy
import numpy as np
import pytest

from conftest import desk_instance, random_tiny_instance
from oracles import enumerate_uc
from uchybrid.environment import evaluate_schedule, repair_commitment
from uchybrid.errors import InfeasibleSchedule, InvalidArgument, UnsupportedTreeSize
from uchybrid.forecast import ArmaSpec, ScenarioTree, build_scenario_tree
from uchybrid.mip import (GAP_CLOSED, NO_SOLUTION, NODE_LIMIT, Budgets, branch_and_bound, build_dmip, build_smip,
                          mip_gap, reserve_from_std, schedule_objective, solve_lp_relaxation)
from uchybrid.mip.lp import INFEASIBLE
from uchybrid.system import Generator, ProblemInstance, Schedule

Q4 = [0.1, 0.5, 0.9, 0.999]


def two_by_two():
    gens = [Generator(f"G{k}", 50.0, 150.0, (100.0, 20.0 + k, 0.01), 300.0, 1.0, 1.0, 1, 2.0) for k in range(2)]
    return ProblemInstance.from_fleet(gens, [150.0, 250.0], [10.0, 20.0], dt=1.0, n_segments=1,
                                      demand_arma=ArmaSpec(sigma=10.0))


def test_variable_counts():
    inst = two_by_two()
    tree = ScenarioTree(np.array(Q4), np.full(4, 0.25), np.zeros((2, 4)))
    m = build_smip(inst, tree)
    assert m.n_binaries == 12
    assert m.n_continuous == 64


def test_paper_tree_shares_binaries():
    from uchybrid.forecast import PAPER_QUANTILES
    from uchybrid.system import bundled_fleet
    T = 48
    inst = ProblemInstance.from_fleet(bundled_fleet(), np.full(T, 900.0), np.full(T, 100.0), dt=0.5,
                                      demand_arma=ArmaSpec(sigma=20.0))
    tree = build_scenario_tree(inst, PAPER_QUANTILES, 2000, 0)
    m = build_smip(inst, tree)
    assert m.u_idx.size == 480 and m.n_binaries == 1440
    assert m.p_idx.shape == (10, 48, 13)


def test_small_trees_rejected():
    inst = two_by_two()
    with pytest.raises(UnsupportedTreeSize):
        build_smip(inst, ScenarioTree.deterministic(inst.T))


def test_gap_formula():
    assert mip_gap(101.0, 100.0) == pytest.approx(0.9900990099, rel=1e-9)
    assert mip_gap(100.0, 100.0 - 1e-7) == 0.0
    assert math.isinf(mip_gap(math.inf, 5.0))


def test_reserve_rule():
    np.testing.assert_array_equal(reserve_from_std([250.0, 0.0]), [1000.0, 0.0])
    with pytest.raises(InvalidArgument):
        build_dmip(two_by_two(), -1.0)


def test_single_scenario_smip_equals_zero_reserve_dmip():
    inst = random_tiny_instance(3)
    a = build_smip(inst, ScenarioTree.deterministic(inst.T), min_scenarios=1)
    b = build_dmip(inst, 0.0)
    assert solve_lp_relaxation(a).objective == pytest.approx(solve_lp_relaxation(b).objective, rel=1e-9)
    assert branch_and_bound(a).ub == pytest.approx(branch_and_bound(b).ub, rel=1e-9)


def test_matches_enumeration_deterministic():
    for seed in range(10):
        inst = random_tiny_instance(seed, G=2, T=6)
        best, _ = enumerate_uc(inst, [1.0], np.zeros((inst.T, 1)))
        assert branch_and_bound(build_dmip(inst, 0.0), seed=seed).ub == pytest.approx(best, rel=1e-6)


def test_reserve_never_lowers_optimum():
    for seed in range(10):
        inst = random_tiny_instance(seed)
        lo = branch_and_bound(build_dmip(inst, 0.0)).ub
        for r in (10.0, 40.0):
            res = np.full(inst.T, r)
            hi = branch_and_bound(build_dmip(inst, res)).ub
            assert hi >= lo - 1e-6 * abs(lo)
            assert hi == pytest.approx(enumerate_uc(inst, [1.0], np.zeros((inst.T, 1)), res)[0], rel=1e-6)


def test_lp_bound_below_mip():
    for seed in range(10):
        inst = random_tiny_instance(seed)
        tree = build_scenario_tree(inst, Q4, 2000, seed)
        m = build_smip(inst, tree)
        best, _ = enumerate_uc(inst, tree.probabilities, tree.ndfe)
        assert solve_lp_relaxation(m).objective <= best + 1e-6 * abs(best)


def test_fixed_schedule_lp_is_schedule_cost():
    inst = desk_instance().with_arma(ArmaSpec(), ArmaSpec())
    s = repair_commitment(inst, np.random.default_rng(0).integers(0, 2, (inst.G, inst.T)))
    m = build_dmip(inst, 0.0)
    lp = solve_lp_relaxation(m, m.fixings_for(s)).objective
    assert lp == pytest.approx(evaluate_schedule(s, inst, 3, 0).expected_cost, rel=1e-9)
    assert lp == pytest.approx(m.fixed_cost(s.u), rel=1e-9)
    assert lp == pytest.approx(schedule_objective(m, s), rel=1e-12)


def test_contradictory_fixing_is_infeasible():
    inst = ProblemInstance.from_fleet(
        [Generator("G", 50.0, 150.0, (100.0, 20.0, 0.0), 0.0, 1.0, 3.0, 0, 0.0, 1.0)], [100.0] * 4, [0.0] * 4, dt=1.0)
    m = build_dmip(inst, 0.0)
    assert solve_lp_relaxation(m, {int(m.u_idx[0, 0]): 1}).status == INFEASIBLE
    with pytest.raises(InvalidArgument):
        solve_lp_relaxation(m, [(int(m.u_idx[0, 1]), 1), (int(m.u_idx[0, 1]), 0)])
    with pytest.raises(InfeasibleSchedule):
        schedule_objective(m, Schedule.from_commitment([[1, 1, 1, 1]], inst.init_status))


def _desk_smip():
    inst = desk_instance()
    return inst, build_smip(inst, build_scenario_tree(inst, Q4, 5000, 0))


@pytest.fixture(scope="module")
def desk_smip():
    return _desk_smip()


def test_zero_budget_returns_all_on(desk_smip):
    inst, m = desk_smip
    rep = branch_and_bound(m, budgets=Budgets(nodes=0))
    assert rep.incumbent == repair_commitment(inst, np.ones((inst.G, inst.T)))
    if not inst.forced_initial_steps[inst.init_status == 0].any():
        assert rep.incumbent == Schedule.all_on(inst)
    assert rep.nodes_explored == 0 and rep.termination == NODE_LIMIT and rep.lb <= rep.ub


def test_warm_start_dominance(desk_smip):
    inst, m = desk_smip
    rng = np.random.default_rng(1)
    for k in range(5):
        ws = repair_commitment(inst, rng.integers(0, 2, (inst.G, inst.T)))
        x = schedule_objective(m, ws)
        for nodes in (0, 1, 5):
            rep = branch_and_bound(m, ws, Budgets(nodes=nodes), seed=k)
            assert rep.warm_start_objective == x
            assert rep.ub <= x


def test_trace_monotone_and_bounds(desk_smip):
    inst, m = desk_smip
    rep = branch_and_bound(m, budgets=Budgets(nodes=400))
    assert rep.termination == GAP_CLOSED and rep.mip_gap == 0.0
    ubs = [u for _, u, _ in rep.gap_trace]
    lbs = [lo for _, _, lo in rep.gap_trace]
    assert all(a >= b for a, b in zip(ubs, ubs[1:]))
    assert all(a <= b for a, b in zip(lbs, lbs[1:]))
    assert all(lo <= u + 1e-9 for u, lo in zip(ubs, lbs))
    s = repair_commitment(inst, np.ones((inst.G, inst.T)))
    assert schedule_objective(m, s) >= rep.lb - 1e-9


def test_truncated_search_reports_gap(desk_smip):
    _, m = desk_smip
    rep = branch_and_bound(m, budgets=Budgets(nodes=3))
    assert rep.lb <= rep.ub
    assert rep.mip_gap == pytest.approx(0.0 if rep.termination == GAP_CLOSED else (rep.ub - rep.lb) / rep.ub * 100)


def test_deterministic_replay(desk_smip):
    _, m = desk_smip
    a = branch_and_bound(m, budgets=Budgets(nodes=20), seed=3).to_dict(timing=False)
    b = branch_and_bound(m, budgets=Budgets(nodes=20), seed=3).to_dict(timing=False)
    assert a == b


@pytest.mark.parametrize("rule", ["earliest", "fractional"])
def test_alternative_branching_rules_agree(rule):
    for seed in range(4):
        inst = random_tiny_instance(seed)
        m = build_dmip(inst, 0.0)
        assert branch_and_bound(m, branching=rule).ub == pytest.approx(branch_and_bound(m).ub, rel=1e-9)
    with pytest.raises(InvalidArgument):
        branch_and_bound(m, branching="random")


def test_scenarios_share_commitment(desk_smip):
    inst, m = desk_smip
    rep = branch_and_bound(m, budgets=Budgets(nodes=50))
    sol = solve_lp_relaxation(m, m.fixings_for(rep.incumbent))
    p = sol.x[m.p_idx]
    assert not np.allclose(p[..., 0], p[..., -1])
    assert m.u_idx.shape == (inst.G, inst.T)


def test_objective_misaligned_with_monte_carlo(desk_smip):
    inst, m = desk_smip
    s = Schedule.all_on(inst)
    assert abs(schedule_objective(m, s) - evaluate_schedule(s, inst, 5000, 0).expected_cost) > 1e-3


def test_no_solution_when_reserve_impossible():
    inst = random_tiny_instance(2)
    cap = float((inst.p_max_arr - inst.p_min_arr).sum())
    rep = branch_and_bound(build_dmip(inst, np.full(inst.T, cap + 1)))
    assert rep.termination == NO_SOLUTION and rep.incumbent is None


def test_lp_dump_solved_by_external_solver(tmp_path):
    for seed in (0, 1, 3):
        inst = random_tiny_instance(seed)
        m = build_dmip(inst, np.full(inst.T, 20.0))
        text = m.to_lp_text()
        assert text.startswith("\\*") and "Subject To" in text and text.rstrip().endswith("End")
        path = tmp_path / f"m{seed}.lp"
        path.write_text(text)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        assert h.readModel(str(path)) == highspy.HighsStatus.kOk
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(branch_and_bound(m).ub, rel=1e-6)


def test_report_json(tmp_path, desk_smip):
    import json
    _, m = desk_smip
    rep = branch_and_bound(m, budgets=Budgets(nodes=5))
    rep.save(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["nodes_explored"] == rep.nodes_explored and len(d["gap_trace"]) == len(rep.gap_trace)
