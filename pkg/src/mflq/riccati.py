"""Coupled generalized Riccati recursions for (P, Pi).

Backward in time from P_N = G and Pi_N = G + Gbar:

    Ups    = R + B'P+B + D'P+D
    H      = B'P+A + D'P+C + S
    P      = Q + A'P+A + C'P+C - H' Ups^+ H
    Upsbar = R + Rbar + (B+Bbar)'Pi+(B+Bbar) + (D+Dbar)'P+(D+Dbar)
    Hbar   = (B+Bbar)'Pi+(A+Abar) + (D+Dbar)'P+(C+Cbar) + S + Sbar
    Pi     = Q + Qbar + (A+Abar)'Pi+(A+Abar) + (C+Cbar)'P+(C+Cbar) - Hbar' Upsbar^+ Hbar

where ``P+`` and ``Pi+`` are the values at k+1.  Feedback gains are
Theta = -Ups^+ H and Thetabar = -Upsbar^+ Hbar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matnum
from .problem import ProblemData


# "singular" for a true inverse means numerically singular, not merely small:
# the eps-recursion legitimately produces eigenvalues as small as 2**-40.
STRICT_RANK_TOL = 8 * np.finfo(float).eps


class RiccatiError(ArithmeticError):
    """Non-finite value produced by a backward recursion."""


class KleinmanError(ArithmeticError):
    """Policy iteration hit a singular matrix or failed to converge."""


@dataclass
class RiccatiSolution:
    """Solution sequences; every array is indexed by t = k - l."""

    l: int
    N: int
    P: np.ndarray       # (T+1, n, n)
    Pi: np.ndarray      # (T+1, n, n)
    Ups: np.ndarray     # (T, m, m)
    Upsbar: np.ndarray  # (T, m, m)
    H: np.ndarray       # (T, m, n)
    Hbar: np.ndarray    # (T, m, n)
    Theta: np.ndarray   # (T, m, n)
    Thetabar: np.ndarray
    eps: float = 0.0
    singular_steps: tuple[int, ...] = ()
    iterations: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.N - self.l

    def P_at(self, k: int) -> np.ndarray:
        return self.P[k - self.l]

    def Pi_at(self, k: int) -> np.ndarray:
        return self.Pi[k - self.l]


def _stage(p: ProblemData, t: int, Pn: np.ndarray, Pin: np.ndarray, eps: float = 0.0):
    d, c = p.dynamics, p.cost
    A, Ab, B, Bb = d.A[t], d.Abar[t], d.B[t], d.Bbar[t]
    C, Cb, D, Db = d.C[t], d.Cbar[t], d.D[t], d.Dbar[t]
    R = c.R[t] + eps * np.eye(p.m)
    AA, BB, CC, DD = A + Ab, B + Bb, C + Cb, D + Db
    Ups = R + B.T @ Pn @ B + D.T @ Pn @ D
    H = B.T @ Pn @ A + D.T @ Pn @ C + c.S[t]
    Upsbar = R + c.Rbar[t] + BB.T @ Pin @ BB + DD.T @ Pn @ DD
    Hbar = BB.T @ Pin @ AA + DD.T @ Pn @ CC + c.S[t] + c.Sbar[t]
    base_P = c.Q[t] + A.T @ Pn @ A + C.T @ Pn @ C
    base_Pi = c.Q[t] + c.Qbar[t] + AA.T @ Pin @ AA + CC.T @ Pn @ CC
    return matnum.symmetrize(Ups), H, matnum.symmetrize(Upsbar), Hbar, base_P, base_Pi


def _allocate(p: ProblemData):
    T, n, m = p.T, p.n, p.m
    return dict(
        P=np.zeros((T + 1, n, n)), Pi=np.zeros((T + 1, n, n)),
        Ups=np.zeros((T, m, m)), Upsbar=np.zeros((T, m, m)),
        H=np.zeros((T, m, n)), Hbar=np.zeros((T, m, n)),
        Theta=np.zeros((T, m, n)), Thetabar=np.zeros((T, m, n)),
    )


def _check_finite(k: int, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise RiccatiError(f"non-finite value at k={k}")


def _recurse(p: ProblemData, eps: float, strict: bool) -> RiccatiSolution:
    out = _allocate(p)
    T = p.T
    out["P"][T] = matnum.symmetrize(p.cost.G)
    out["Pi"][T] = matnum.symmetrize(p.cost.G + p.cost.Gbar)
    singular = []
    for t in range(T - 1, -1, -1):
        k = p.l + t
        Ups, H, Upsbar, Hbar, base_P, base_Pi = _stage(p, t, out["P"][t + 1], out["Pi"][t + 1], eps)
        if strict:
            Ui, s1 = matnum.safe_inverse(Ups, STRICT_RANK_TOL)
            Ubi, s2 = matnum.safe_inverse(Upsbar, STRICT_RANK_TOL)
            if s1 or s2:
                singular.append(k)
        else:
            Ui, Ubi = matnum.pinv(Ups), matnum.pinv(Upsbar)
        P = matnum.symmetrize(base_P - H.T @ Ui @ H)
        Pi = matnum.symmetrize(base_Pi - Hbar.T @ Ubi @ Hbar)
        _check_finite(k, P, Pi, Ups, Upsbar)
        out["P"][t], out["Pi"][t] = P, Pi
        out["Ups"][t], out["Upsbar"][t] = Ups, Upsbar
        out["H"][t], out["Hbar"][t] = H, Hbar
        out["Theta"][t] = -Ui @ H
        out["Thetabar"][t] = -Ubi @ Hbar
    return RiccatiSolution(l=p.l, N=p.N, eps=eps, singular_steps=tuple(sorted(singular)), **out)


def solve_gre(p: ProblemData) -> RiccatiSolution:
    """Backward recursion with Moore-Penrose pseudo-inverses."""
    return _recurse(p, 0.0, strict=False)


def solve_gre_eps(p: ProblemData, eps: float) -> RiccatiSolution:
    """Recursion with R -> R + eps I (hence R + Rbar -> R + Rbar + eps I).

    True inverses are used; a matrix that is singular beyond the rank
    tolerance falls back to the pseudo-inverse and its time index is listed
    in ``singular_steps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return _recurse(p, float(eps), strict=True)


@dataclass(frozen=True)
class Failure:
    k: int
    matrix: str      # "Ups" or "Upsbar"
    condition: str   # "psd", "range" or "gain"
    value: float


@dataclass
class RegularityVerdict:
    kind: str                  # strongly_regular, regular, irregular
    alpha: float               # min over k of the smallest eigenvalue of Ups_k, Upsbar_k
    failures: list[Failure]
    min_eig_ups: np.ndarray
    min_eig_upsbar: np.ndarray
    range_residual_ups: np.ndarray
    range_residual_upsbar: np.ndarray
    gain_norms: np.ndarray     # per k: ||Theta_k||_F^2 + ||Thetabar_k||_F^2

    @property
    def regular(self) -> bool:
        return self.kind in ("regular", "strongly_regular")

    @property
    def strongly_regular(self) -> bool:
        return self.kind == "strongly_regular"


def classify(sol: RiccatiSolution) -> RegularityVerdict:
    """Check definiteness, range inclusion and finite gains at every step."""
    T = sol.T
    me_u, me_ub = np.zeros(T), np.zeros(T)
    rr_u, rr_ub = np.zeros(T), np.zeros(T)
    gains = np.zeros(T)
    failures: list[Failure] = []
    for t in range(T):
        k = sol.l + t
        for name, M, Hm, me, rr in (("Ups", sol.Ups[t], sol.H[t], me_u, rr_u),
                                    ("Upsbar", sol.Upsbar[t], sol.Hbar[t], me_ub, rr_ub)):
            verdict = matnum.psd_check(M)
            me[t] = verdict.min_eig
            if not verdict.is_psd:
                failures.append(Failure(k, name, "psd", verdict.min_eig))
            rc = matnum.range_included(Hm, M)
            rr[t] = rc.residual
            if not rc.ok:
                failures.append(Failure(k, name, "range", rc.residual))
        gains[t] = float(np.sum(sol.Theta[t] ** 2) + np.sum(sol.Thetabar[t] ** 2))
        if not np.isfinite(gains[t]):
            failures.append(Failure(k, "Ups", "gain", gains[t]))
    alpha = float(min(me_u.min(initial=np.inf), me_ub.min(initial=np.inf)))
    if failures:
        kind = "irregular"
    elif alpha > matnum.TOL_PSD:
        kind = "strongly_regular"
    else:
        kind = "regular"
    return RegularityVerdict(kind, alpha, failures, me_u, me_ub, rr_u, rr_ub, gains)


def solve_lyapunov(p: ProblemData, Theta: np.ndarray, Thetabar: np.ndarray):
    """Cost-to-go matrices of the linear feedback u = Theta(x - Ex) + Thetabar Ex.

    Returns ``(P, Pi)`` stacked over t = 0..T.
    """
    Theta = np.asarray(Theta, dtype=float)
    Lam = np.asarray(Thetabar, dtype=float)
    T, n, m = p.T, p.n, p.m
    if Theta.shape != (T, m, n) or Lam.shape != (T, m, n):
        raise ValueError(f"gains must have shape {(T, m, n)}")
    d, c = p.dynamics, p.cost
    P = np.zeros((T + 1, n, n))
    Pi = np.zeros((T + 1, n, n))
    P[T] = matnum.symmetrize(c.G)
    Pi[T] = matnum.symmetrize(c.G + c.Gbar)
    for t in range(T - 1, -1, -1):
        Th, L = Theta[t], Lam[t]
        F = d.A[t] + d.B[t] @ Th
        K = d.C[t] + d.D[t] @ Th
        SS = c.S[t].T @ Th
        Pt = F.T @ P[t + 1] @ F + K.T @ P[t + 1] @ K + c.Q[t] + Th.T @ c.R[t] @ Th + SS + SS.T
        Fb = d.A[t] + d.Abar[t] + (d.B[t] + d.Bbar[t]) @ L
        Kb = d.C[t] + d.Cbar[t] + (d.D[t] + d.Dbar[t]) @ L
        SSb = (c.S[t] + c.Sbar[t]).T @ L
        Pit = (c.Q[t] + c.Qbar[t] + L.T @ (c.R[t] + c.Rbar[t]) @ L + SSb + SSb.T
               + Fb.T @ Pi[t + 1] @ Fb + Kb.T @ P[t + 1] @ Kb)
        _check_finite(p.l + t, Pt, Pit)
        P[t], Pi[t] = matnum.symmetrize(Pt), matnum.symmetrize(Pit)
    return P, Pi


def _from_iterate(p: ProblemData, P: np.ndarray, Pi: np.ndarray, iterations: list) -> RiccatiSolution:
    out = _allocate(p)
    out["P"], out["Pi"] = P.copy(), Pi.copy()
    for t in range(p.T):
        Ups, H, Upsbar, Hbar, _, _ = _stage(p, t, P[t + 1], Pi[t + 1])
        out["Ups"][t], out["Upsbar"][t], out["H"][t], out["Hbar"][t] = Ups, Upsbar, H, Hbar
        out["Theta"][t] = -matnum.pinv(Ups) @ H
        out["Thetabar"][t] = -matnum.pinv(Upsbar) @ Hbar
    return RiccatiSolution(l=p.l, N=p.N, iterations=iterations, **out)


def kleinman_iterate(p: ProblemData, max_iters: int = 200, tol: float = 1e-12) -> RiccatiSolution:
    """Policy iteration: evaluate the current gains, then improve them.

    Starts from the gain-free Lyapunov solution.  Each improvement step
    inverts Ups and Upsbar built from the current iterate, so the method is
    meant for uniformly convex instances.  ``iterations`` on the result holds
    every ``(P, Pi)`` iterate, starting with the seed.
    """
    zero = np.zeros((p.T, p.m, p.n))
    P, Pi = solve_lyapunov(p, zero, zero)
    trace = [(P, Pi)]
    for _ in range(max_iters):
        Theta = np.zeros_like(zero)
        Lam = np.zeros_like(zero)
        for t in range(p.T):
            Ups, H, Upsbar, Hbar, _, _ = _stage(p, t, P[t + 1], Pi[t + 1])
            Ui, s1 = matnum.safe_inverse(Ups, STRICT_RANK_TOL)
            Ubi, s2 = matnum.safe_inverse(Upsbar, STRICT_RANK_TOL)
            if s1:
                raise KleinmanError(f"singular Ups at k={p.l + t}")
            if s2:
                raise KleinmanError(f"singular Upsbar at k={p.l + t}")
            Theta[t] = -Ui @ H
            Lam[t] = -Ubi @ Hbar
        P_new, Pi_new = solve_lyapunov(p, Theta, Lam)
        trace.append((P_new, Pi_new))
        delta = max(
            float(np.linalg.norm(P_new[t] - P[t]) + np.linalg.norm(Pi_new[t] - Pi[t]))
            for t in range(p.T + 1)
        )
        P, Pi = P_new, Pi_new
        if delta <= tol:
            return _from_iterate(p, P, Pi, trace)
    raise KleinmanError(f"no convergence within {max_iters} iterations")


def gre_residual(p: ProblemData, P: np.ndarray, Pi: np.ndarray) -> float:
    """Max-norm defect of a candidate (P, Pi) in the pseudo-inverse recursion."""
    worst = 0.0
    for t in range(p.T):
        Ups, H, Upsbar, Hbar, base_P, base_Pi = _stage(p, t, P[t + 1], Pi[t + 1])
        rP = base_P - H.T @ matnum.pinv(Ups) @ H - P[t]
        rPi = base_Pi - Hbar.T @ matnum.pinv(Upsbar) @ Hbar - Pi[t]
        worst = max(worst, float(np.max(np.abs(rP))), float(np.max(np.abs(rPi))))
    worst = max(worst, float(np.max(np.abs(P[p.T] - p.cost.G))),
                float(np.max(np.abs(Pi[p.T] - p.cost.G - p.cost.Gbar))))
    return worst
