import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflq import matnum


def random_symmetric(rng, k, rank=None):
    rank = k if rank is None else rank
    V = np.linalg.qr(rng.standard_normal((k, k)))[0]
    w = np.zeros(k)
    w[:rank] = rng.uniform(0.1, 5, rank) * rng.choice([-1, 1], rank)
    return (V * w) @ V.T


def test_pinv_examples():
    np.testing.assert_allclose(matnum.pinv(np.diag([12.0, 0.0])), np.diag([1 / 12, 0.0]), atol=1e-15)
    np.testing.assert_array_equal(matnum.pinv(np.zeros((3, 3))), np.zeros((3, 3)))
    np.testing.assert_allclose(matnum.pinv(np.diag([2.0, 2.0])), 0.5 * np.eye(2), atol=1e-15)


def test_psd_check_examples():
    assert matnum.psd_check(np.array([[11.0]]), margin=1).margin_ok
    v = matnum.psd_check(np.array([[0.0]]))
    assert v.is_psd and not v.is_pd_with_margin(1)
    assert not matnum.psd_check(np.diag([1.0, -1e-6])).is_psd


def test_range_examples():
    assert matnum.range_included(np.array([[1.0], [-1.0]]), 2 * np.eye(2))
    rc = matnum.range_included(np.array([[1.0]]), np.array([[0.0]]))
    assert not rc and rc.residual == pytest.approx(1.0)
    assert matnum.range_included(np.array([[12.0], [0.0]]), np.diag([12.0, 0.0]))


def test_jacobi_matches_lapack():
    rng = np.random.default_rng(1)
    for k in (1, 2, 5, 12, 30):
        M = random_symmetric(rng, k)
        w, V = matnum.jacobi_eigh(M)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(M), atol=1e-12)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, M, atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(k), atol=1e-12)
        assert np.all(np.diff(w) >= 0)


def test_eigh_switches_to_lapack_for_large():
    rng = np.random.default_rng(2)
    M = random_symmetric(rng, matnum.JACOBI_MAX_SIZE + 6)
    w, _ = matnum.eigh(M)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(M), atol=1e-11)


def test_safe_inverse_flags_singular():
    inv, singular = matnum.safe_inverse(np.diag([1.0, 0.0]))
    assert singular
    inv, singular = matnum.safe_inverse(np.diag([2.0, 4.0]))
    assert not singular
    np.testing.assert_allclose(inv, np.diag([0.5, 0.25]))


def test_asymmetry_and_symmetrize():
    M = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert matnum.asymmetry(M) > 0.1
    assert matnum.asymmetry(matnum.symmetrize(M)) == 0.0


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, 8), seed=st.integers(0, 2**32 - 1), deficit=st.integers(0, 8))
def test_moore_penrose_identities(k, seed, deficit):
    rng = np.random.default_rng(seed)
    M = random_symmetric(rng, k, rank=max(0, k - deficit))
    X = matnum.pinv(M)
    tol = 1e-10 * max(1.0, np.abs(M).max() * np.abs(X).max())
    assert np.abs(M @ X @ M - M).max() <= tol
    assert np.abs(X @ M @ X - X).max() <= tol
    assert np.abs(M @ X - (M @ X).T).max() <= tol
    assert np.abs(X @ M - (X @ M).T).max() <= tol
