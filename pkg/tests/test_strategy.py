import numpy as np
import pytest

from helpers import indefinite_instance, standard_instance
from mflq import (
    build_problem,
    detect_open_loop,
    finiteness_scan,
    minimizing_sequence,
    oracle,
    solvability,
    solve_gre,
    solve_gre_eps,
    synthesize_closed_loop,
)
from mflq.problem import InitialDistribution
from mflq.strategy import ClosedLoopStrategy, Unsolvable, default_schedule

PM = InitialDistribution.from_atoms([([1.0], 0.5), ([-1.0], 0.5)])
ONE = InitialDistribution.deterministic([1.0])


def test_ex71_strategy(fx):
    p = fx("ex71").with_initial(ONE)
    strat, value = synthesize_closed_loop(p)
    P, Pi = solve_gre(p).P[:, 0, 0], solve_gre(p).Pi[:, 0, 0]
    np.testing.assert_allclose(strat.Theta[:, 0, 0], -P[1:] / (3 * P[1:] - 1), atol=1e-12)
    np.testing.assert_allclose(strat.Thetabar[:, 0, 0], -P[1:] / (Pi[1:] + 2 * P[1:] - 1), atol=1e-12)
    assert not strat.v.any()
    assert value.value == pytest.approx(-308 / 495, abs=1e-12)


def test_zero_problem_strategy():
    strat, value = synthesize_closed_loop(build_problem(1, 1, 2, initial=[1.0]))
    assert not strat.Theta.any() and not strat.Thetabar.any() and not strat.v.any()
    assert value.value == 0


def test_irregular_unsolvable(fx):
    out = synthesize_closed_loop(fx("irregular"))
    assert isinstance(out, Unsolvable) and not out
    assert "range inclusion" in out.reason and out.reason.startswith("Ups at k=")


def test_ex72_values(fx):
    p = fx("ex72")
    assert synthesize_closed_loop(p.with_initial(PM))[1].value == pytest.approx(1.0, abs=1e-12)
    assert synthesize_closed_loop(p)[1].value == pytest.approx(3.0, abs=1e-12)


def test_ex51_predictable_value(fx):
    p = fx("ex51").with_info("predictable")
    for xi in (-2.0, 0.5, 3.0):
        _, value = synthesize_closed_loop(p.with_initial(InitialDistribution.deterministic([xi])))
        assert value.value == pytest.approx(-xi ** 2, abs=1e-12)


def test_strategy_control_formula():
    s = ClosedLoopStrategy(np.array([[[2.0]]]), np.array([[[3.0]]]), np.array([[1.0]]))
    np.testing.assert_allclose(s.control(0, np.array([5.0]), np.array([1.0])), [2 * 4 + 3 + 1])


def test_minimizing_sequence(fx):
    p = fx("ex71")
    step = minimizing_sequence(p, 1e-8)
    assert step.cost == pytest.approx(synthesize_closed_loop(p)[1].value, abs=1e-6)
    assert step.a1_ok
    hom0 = oracle.homogeneous_zero_start(fx("ex72"))
    step = minimizing_sequence(hom0, 1e-3)
    assert step.cost == 0 and step.norm == 0


def test_minimizing_costs_decrease():
    rng = np.random.default_rng(12)
    for _ in range(5):
        p = standard_instance(rng, affine=True)
        costs = [minimizing_sequence(p, e).cost for e in default_schedule(1.0, 12)]
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(costs, costs[1:]))


def test_finiteness_examples(fx):
    rep = finiteness_scan(fx("ex72"))
    assert rep.verdict == "finite"
    assert rep.P_l[-1, 0, 0] == pytest.approx(1.0, abs=1e-6)
    assert rep.Pi_l[-1, 0, 0] == pytest.approx(3.0, abs=1e-6)
    p = fx("ex71")
    rep = finiteness_scan(p)
    assert rep.verdict == "finite"
    sol = solve_gre(p)
    assert rep.P_l[-1] == pytest.approx(sol.P[0], abs=1e-9)
    assert rep.Pi_l[-1] == pytest.approx(sol.Pi[0], abs=1e-9)
    assert finiteness_scan(fx("divergent")).verdict == "infinite"
    assert finiteness_scan(fx("zero")).verdict == "finite"
    assert finiteness_scan(fx("ex51")).verdict == "infinite"


def test_divergent_scalar_recursion(fx):
    # closed-form scalar recursion; it blows up as eps decreases to 1
    p = fx("divergent")
    for eps in (1.5, 3.0):
        P1 = -1 - 1 / (eps - 1)
        P0 = P1 - P1 ** 2 / (eps + P1)
        np.testing.assert_allclose(solve_gre_eps(p, eps).P[:, 0, 0], [P0, P1, -1.0], rtol=1e-12)


def test_schedule_validation(fx):
    with pytest.raises(ValueError):
        finiteness_scan(fx("ex71"), [0.5, 1.0])
    with pytest.raises(ValueError):
        finiteness_scan(fx("ex71"), [1.0, 0.0])
    assert default_schedule(2.0, 3) == [2.0, 1.0, 0.5, 0.25]


def test_open_loop_examples(fx):
    p = fx("ex71")
    rep = detect_open_loop(p)
    assert rep.verdict == "solvable"
    strat, _ = synthesize_closed_loop(p)
    assert (rep.control - strat.tree_control(p)).norm() < 1e-6
    rep = detect_open_loop(fx("divergent"))
    assert rep.verdict == "unsolvable" and rep.reason.startswith("not attempted")
    rep = detect_open_loop(fx("zero"))
    assert rep.verdict == "solvable" and rep.control.norm() == 0


def test_ex72_open_loop_matches_oracle(fx):
    p = fx("ex72")
    rep = detect_open_loop(p)
    assert rep.verdict == "solvable"
    assert (rep.control - oracle.solve_exact(p).control).norm() < 1e-6


def test_solvability_chain():
    rng = np.random.default_rng(13)
    sched = default_schedule(1.0, 30)
    for gen in (standard_instance, indefinite_instance):
        for _ in range(4):
            rep = solvability(gen(rng, affine=True, T=2), sched)
            assert rep.consistent()
            if rep.finiteness.verdict == "infinite":
                assert not rep.closed_loop_solvable
