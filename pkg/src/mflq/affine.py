"""Affine costate recursion and the constant offset of the feedback law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matnum
from .problem import ProblemData
from .riccati import RiccatiError, RiccatiSolution


@dataclass
class AffineSolution:
    eta: np.ndarray       # (T+1, n)
    zeta: np.ndarray      # (T, m)
    v: np.ndarray         # (T, m), v_k = -Upsbar_k^+ zeta_k
    range_ok: np.ndarray  # (T,) bool: zeta_k in R(Upsbar_k)
    range_residual: np.ndarray

    @property
    def certifying(self) -> bool:
        return bool(np.all(self.range_ok))


def solve_lre(p: ProblemData, sol: RiccatiSolution) -> AffineSolution:
    """Backward recursion for eta from eta_N = g + gbar.

        zeta = (D+Dbar)'P+ sigma + (B+Bbar)'(Pi+ b + eta+) + rho + rhobar
        eta  = (C+Cbar)'P+ sigma + (A+Abar)'(Pi+ b + eta+) - Hbar' Upsbar^+ zeta + q + qbar
    """
    d, c = p.dynamics, p.cost
    T, n, m = p.T, p.n, p.m
    eta = np.zeros((T + 1, n))
    zeta = np.zeros((T, m))
    v = np.zeros((T, m))
    ok = np.ones(T, dtype=bool)
    res = np.zeros(T)
    eta[T] = c.g + c.gbar
    for t in range(T - 1, -1, -1):
        Pn, Pin = sol.P[t + 1], sol.Pi[t + 1]
        AA, BB = d.A[t] + d.Abar[t], d.B[t] + d.Bbar[t]
        CC, DD = d.C[t] + d.Cbar[t], d.D[t] + d.Dbar[t]
        carry = Pin @ d.b[t] + eta[t + 1]
        z = DD.T @ Pn @ d.sigma[t] + BB.T @ carry + c.rho[t] + c.rhobar[t]
        Ubi = matnum.pinv(sol.Upsbar[t])
        rc = matnum.range_included(z[:, None], sol.Upsbar[t])
        ok[t], res[t] = rc.ok, rc.residual
        zeta[t] = z
        v[t] = -Ubi @ z
        eta[t] = CC.T @ Pn @ d.sigma[t] + AA.T @ carry - sol.Hbar[t].T @ Ubi @ z + c.q[t] + c.qbar[t]
        if not (np.all(np.isfinite(eta[t])) and np.all(np.isfinite(v[t]))):
            raise RiccatiError(f"non-finite value at k={p.l + t}")
    return AffineSolution(eta, zeta, v, ok, res)
