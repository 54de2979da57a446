import numpy as np
import pytest

from helpers import standard_instance
from mflq import build_problem, classify, kleinman_iterate, solve_gre, solve_gre_eps, solve_lyapunov
from mflq.riccati import KleinmanError, gre_residual


def scalars(seq):
    return np.asarray(seq)[:, 0, 0]


def test_ex71_values(fx):
    sol = solve_gre(fx("ex71"))
    np.testing.assert_allclose(scalars(sol.P), [1260 / 803, 28 / 11, 4], atol=1e-12)
    np.testing.assert_allclose(scalars(sol.Pi), [-308 / 495, 0, 1], atol=1e-12)
    verdict = classify(sol)
    assert verdict.strongly_regular
    assert verdict.alpha == pytest.approx(73 / 11, abs=1e-12)


def test_ex71_gains(fx):
    sol = solve_gre(fx("ex71"))
    P, Pi = scalars(sol.P), scalars(sol.Pi)
    np.testing.assert_allclose(scalars(sol.Theta), -P[1:] / (3 * P[1:] - 1), atol=1e-12)
    np.testing.assert_allclose(scalars(sol.Thetabar), -P[1:] / (Pi[1:] + 2 * P[1:] - 1), atol=1e-12)


def test_ex72_values(fx):
    sol = solve_gre(fx("ex72"))
    np.testing.assert_allclose(scalars(sol.P), 1.0, atol=1e-12)
    np.testing.assert_allclose(scalars(sol.Pi), 3.0, atol=1e-12)
    np.testing.assert_allclose(sol.Upsbar[0], np.diag([12.0, 0.0]), atol=1e-12)
    verdict = classify(sol)
    # every range residual vanishes, so the instance is regular (not strongly)
    assert verdict.kind == "regular"
    assert max(verdict.range_residual_ups.max(), verdict.range_residual_upsbar.max()) < 1e-12


def test_zero_problem():
    sol = solve_gre(build_problem(2, 1, 3))
    assert not sol.P.any() and not sol.Pi.any()


def test_irregular_fixture(fx):
    verdict = classify(solve_gre(fx("irregular")))
    assert verdict.kind == "irregular"
    ks = {f.k for f in verdict.failures if f.matrix == "Ups" and f.condition == "range"}
    assert ks == {0, 1}


def test_terminal_and_symmetry_invariants():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = standard_instance(rng)
        sol = solve_gre(p)
        assert np.array_equal(sol.P[-1], p.cost.G) and np.array_equal(sol.Pi[-1], p.cost.G + p.cost.Gbar)
        for M in list(sol.P) + list(sol.Pi):
            assert np.abs(M - M.T).max() <= 1e-12 * max(1.0, np.abs(M).max())
        assert classify(sol).strongly_regular
        assert gre_residual(p, sol.P, sol.Pi) < 1e-10


def test_eps_recursion_ex72(fx):
    p = fx("ex72")
    sol = solve_gre_eps(p, 1.0)
    P = [1.0]
    for _ in range(5):
        P.append(1 + P[-1] - 2 * P[-1] ** 2 / (2 * P[-1] + 1.0))
    np.testing.assert_allclose(scalars(sol.P), P[::-1], rtol=1e-13)
    tiny = solve_gre_eps(p, 2.0**-40)
    np.testing.assert_allclose(scalars(tiny.P), 1.0, atol=1e-6)
    np.testing.assert_allclose(scalars(tiny.Pi), 3.0, atol=1e-6)
    assert tiny.singular_steps == ()


def test_eps_zero_problem():
    sol = solve_gre_eps(build_problem(1, 1, 2), 1.0)
    assert not sol.P.any() and not sol.Pi.any()
    with pytest.raises(ValueError):
        solve_gre_eps(build_problem(1, 1, 2), 0.0)


def test_eps_singular_steps_flagged(fx):
    # at eps = 1, Ups = 1 + P_{k+1} vanishes at both steps since P stays at -1
    assert solve_gre_eps(fx("divergent"), 1.0).singular_steps == (0, 1)


def test_lyapunov_ex51_zero_gains(fx):
    p = fx("ex51")
    z = np.zeros((p.T, 1, 1))
    P, Pi = solve_lyapunov(p, z, z)
    np.testing.assert_allclose(P, -1.0)
    np.testing.assert_allclose(Pi, -1.0)


def test_lyapunov_reproduces_gre(fx):
    rng = np.random.default_rng(4)
    for p in [fx("ex71")] + [standard_instance(rng) for _ in range(5)]:
        sol = solve_gre(p)
        P, Pi = solve_lyapunov(p, sol.Theta, sol.Thetabar)
        np.testing.assert_allclose(P, sol.P, atol=1e-10)
        np.testing.assert_allclose(Pi, sol.Pi, atol=1e-10)


def test_lyapunov_shape_check():
    p = build_problem(1, 1, 2)
    with pytest.raises(ValueError):
        solve_lyapunov(p, np.zeros((1, 1, 1)), np.zeros((2, 1, 1)))


def test_kleinman_ex71(fx):
    p = fx("ex71")
    sol = kleinman_iterate(p)
    ref = solve_gre(p)
    np.testing.assert_allclose(sol.P, ref.P, atol=1e-10)
    np.testing.assert_allclose(sol.Pi, ref.Pi, atol=1e-10)
    assert len(sol.iterations) >= 2


def test_kleinman_monotone_on_standard_instances():
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = standard_instance(rng)
        sol = kleinman_iterate(p)
        for (P0, Pi0), (P1, Pi1) in zip(sol.iterations, sol.iterations[1:]):
            for t in range(p.T + 1):
                assert np.linalg.eigvalsh(P0[t] - P1[t]).min() >= -1e-10
                assert np.linalg.eigvalsh(Pi0[t] - Pi1[t]).min() >= -1e-10


def test_kleinman_ex51_singular(fx):
    with pytest.raises(KleinmanError, match="singular Ups"):
        kleinman_iterate(fx("ex51"))
