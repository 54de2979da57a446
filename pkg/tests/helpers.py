"""Random instance generators shared by the property tests."""

from __future__ import annotations

import numpy as np

from mflq import build_problem
from mflq.problem import InitialDistribution

PM_ONE = InitialDistribution.from_atoms([([1.0], 0.5), ([-1.0], 0.5)])


def _sym(rng, k, scale=1.0):
    X = rng.standard_normal((k, k))
    return scale * (X + X.T) / 2


def _psd(rng, k, floor=0.0):
    X = rng.standard_normal((k, k))
    return X @ X.T / k + floor * np.eye(k)


def _atoms(n):
    vals = [np.full(n, 1.0), np.full(n, -1.0)]
    return InitialDistribution.from_atoms([(vals[0], 0.5), (vals[1], 0.5)])


def _dynamics(rng, n, m, T, scale=0.7):
    return {key: [scale * rng.standard_normal(shape) for _ in range(T)]
            for key, shape in (("A", (n, n)), ("Abar", (n, n)), ("B", (n, m)), ("Bbar", (n, m)),
                               ("C", (n, n)), ("Cbar", (n, n)), ("D", (n, m)), ("Dbar", (n, m)))}


def standard_instance(rng, n=None, m=None, T=None, affine=False):
    """Convex instance: positive definite control weights and PSD state weights."""
    n = n or int(rng.integers(1, 3))
    m = m or int(rng.integers(1, 3))
    T = T or int(rng.integers(1, 5))
    coeffs = _dynamics(rng, n, m, T)
    coeffs.update(
        Q=[_psd(rng, n) for _ in range(T)],
        Qbar=[_psd(rng, n) for _ in range(T)],
        R=[_psd(rng, m, 0.1) for _ in range(T)],
        Rbar=[_psd(rng, m) for _ in range(T)],
        G=_psd(rng, n), Gbar=_psd(rng, n),
    )
    if affine:
        coeffs.update(b=[rng.standard_normal(n) for _ in range(T)],
                      sigma=[rng.standard_normal(n) for _ in range(T)],
                      q=[rng.standard_normal(n) for _ in range(T)],
                      rho=[rng.standard_normal(m) for _ in range(T)],
                      g=rng.standard_normal(n))
    return build_problem(n, m, T, initial=_atoms(n), **coeffs)


def indefinite_instance(rng, n=None, m=None, T=None, affine=False):
    """Instance whose control weight R is indefinite (or negative) at every step."""
    n = n or int(rng.integers(1, 3))
    m = m or int(rng.integers(1, 3))
    T = T or int(rng.integers(1, 5))
    coeffs = _dynamics(rng, n, m, T, scale=1.0)
    coeffs.update(
        Q=[_sym(rng, n) for _ in range(T)],
        Qbar=[_sym(rng, n, 0.5) for _ in range(T)],
        S=[0.5 * rng.standard_normal((m, n)) for _ in range(T)],
        R=[_sym(rng, m) - 0.3 * np.eye(m) for _ in range(T)],
        Rbar=[_sym(rng, m, 0.5) for _ in range(T)],
        G=_psd(rng, n, 0.5) * 2, Gbar=_sym(rng, n, 0.5),
    )
    if affine:
        coeffs.update(b=[rng.standard_normal(n) for _ in range(T)],
                      sigma=[rng.standard_normal(n) for _ in range(T)],
                      q=[rng.standard_normal(n) for _ in range(T)],
                      qbar=[rng.standard_normal(n) for _ in range(T)],
                      rho=[rng.standard_normal(m) for _ in range(T)],
                      rhobar=[rng.standard_normal(m) for _ in range(T)],
                      g=rng.standard_normal(n), gbar=rng.standard_normal(n))
    return build_problem(n, m, T, initial=_atoms(n), **coeffs)
