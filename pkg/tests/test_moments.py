import numpy as np
import pytest

from helpers import indefinite_instance, standard_instance
from mflq import build_problem, closed_loop_cost, oracle, propagate, simulate, synthesize_closed_loop
from mflq.problem import FIXTURES, InitialDistribution
from mflq.strategy import ClosedLoopStrategy

PM = InitialDistribution.from_atoms([([1.0], 0.5), ([-1.0], 0.5)])


def random_strategy(p, rng):
    return ClosedLoopStrategy(rng.standard_normal((p.T, p.m, p.n)), rng.standard_normal((p.T, p.m, p.n)),
                              rng.standard_normal((p.T, p.m)), p.l)


def test_zero_dynamics():
    p = build_problem(2, 1, 3, initial=[1.0, -2.0])
    ms = propagate(p, ClosedLoopStrategy.zero(p))
    np.testing.assert_array_equal(ms.mean[0], [1.0, -2.0])
    assert not ms.mean[1:].any() and not ms.second[1:].any()


def test_ex71_one_step(fx):
    p = fx("ex71")
    strat, _ = synthesize_closed_loop(p)
    ms = propagate(p, strat)
    th = strat.Theta[0, 0, 0]
    assert ms.mean[0, 0] == 0 and ms.second[0, 0, 0] == 1
    # x_1 = sqrt(2) theta xi + (1 + theta) xi w_0 since E xi = 0
    assert ms.second[1, 0, 0] == pytest.approx(2 * th ** 2 + (1 + th) ** 2, abs=1e-14)


def test_deterministic_system_has_no_spread():
    p = build_problem(1, 1, 3, A=0.5, Abar=0.2, B=1.0, Q=1.0, R=1.0, G=1.0, b=0.3, initial=[2.0])
    ms = propagate(p, ClosedLoopStrategy.zero(p))
    np.testing.assert_allclose(ms.covariance, 0.0, atol=1e-15)
    np.testing.assert_allclose(ms.second, ms.outer, atol=1e-15)


def test_ex72_zero_strategy_cost(fx):
    p = fx("ex72")
    assert closed_loop_cost(p, ClosedLoopStrategy.zero(p)) == pytest.approx(4095.0, rel=1e-14)


def test_ex71_deterministic_cost(fx):
    p = fx("ex71").with_initial(InitialDistribution.deterministic([1.0]))
    strat, _ = synthesize_closed_loop(p)
    assert closed_loop_cost(p, strat) == pytest.approx(-308 / 495, abs=1e-12)


def test_zero_problem_cost():
    p = build_problem(1, 1, 2, initial=[3.0])
    assert closed_loop_cost(p, ClosedLoopStrategy.zero(p)) == 0


@pytest.mark.parametrize("name", [f for f in FIXTURES if f != "ex51"])
def test_matches_oracle_on_fixtures(fx, name):
    rng = np.random.default_rng(14)
    p = fx(name)
    for s in (ClosedLoopStrategy.zero(p), random_strategy(p, rng)):
        assert closed_loop_cost(p, s) == pytest.approx(oracle.exact_cost(p, s.tree_control(p)), rel=1e-12, abs=1e-12)


def test_matches_oracle_random():
    rng = np.random.default_rng(15)
    for gen in (standard_instance, indefinite_instance):
        for _ in range(5):
            p = gen(rng, affine=True)
            s = random_strategy(p, rng)
            exact = oracle.exact_cost(p, s.tree_control(p))
            assert closed_loop_cost(p, s) == pytest.approx(exact, rel=1e-10, abs=1e-10)


def test_noise_kind_does_not_change_moments(fx):
    p = fx("ex71")
    s, _ = synthesize_closed_loop(p)
    a, b = propagate(p.with_noise("rademacher"), s), propagate(p.with_noise("gaussian"), s)
    assert np.array_equal(a.second, b.second) and np.array_equal(a.mean, b.mean)


def test_simulate_deterministic():
    p = build_problem(1, 1, 3, A=0.5, B=1.0, Q=1.0, R=1.0, G=1.0, b=0.3, initial=[2.0])
    s = ClosedLoopStrategy(np.full((3, 1, 1), -0.3), np.full((3, 1, 1), -0.2), np.full((3, 1), 0.1))
    est = simulate(p, s, 5000, seed=1)
    assert est.mean == pytest.approx(closed_loop_cost(p, s), rel=1e-13)
    assert est.stderr < 1e-12


def test_simulate_reproducible(fx, monkeypatch):
    p = fx("ex71")
    s, _ = synthesize_closed_loop(p)
    a = simulate(p, s, 10000, seed=7)
    monkeypatch.setenv("MFLQ_THREADS", "1")
    b = simulate(p, s, 10000, seed=7)
    assert a.mean == b.mean and a.stderr == b.stderr
    assert simulate(p, s, 10000, seed=8).mean != a.mean


@pytest.mark.parametrize("kind", ["rademacher", "gaussian"])
def test_simulate_within_four_se(fx, kind):
    p = fx("ex71")
    s, value = synthesize_closed_loop(p)
    est = simulate(p, s, 100_000, seed=3, kind=kind)
    assert abs(est.mean - value.value) <= 4 * est.stderr


def test_simulate_rejects_no_paths(fx):
    p = fx("ex71")
    with pytest.raises(ValueError):
        simulate(p, ClosedLoopStrategy.zero(p), 0)
