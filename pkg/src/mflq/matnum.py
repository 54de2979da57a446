"""Small dense symmetric linear algebra.

Pseudo-inverses, definiteness tests and range-inclusion tests for the
matrices that show up in the Riccati recursions.  Everything here works on
real symmetric matrices, so the eigendecomposition is the only factorization
needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-10   # relative to max |eigenvalue|
TOL_PSD = 1e-10    # absolute
TOL_RANGE = 1e-9   # absolute, on ||(I - M M^+) H||_max
SYM_TOL = 1e-12    # relative to the max-norm
JACOBI_MAX_SIZE = 64


def asymmetry(M: np.ndarray) -> float:
    """Largest entry of |M - M'| relative to the max-norm of M (0 for M = 0)."""
    M = np.asarray(M, dtype=float)
    scale = np.max(np.abs(M)) if M.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(M - M.T)) / scale)


def symmetrize(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def jacobi_eigh(M: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a real symmetric matrix.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol * ||M||_F``.  Returns ascending eigenvalues and the
    matching orthonormal eigenvectors as columns.
    """
    a = symmetrize(M).copy()
    p = a.shape[0]
    v = np.eye(p)
    fro = np.linalg.norm(a)
    if p <= 1 or fro == 0.0:
        w = np.diag(a).copy()
        return w, v
    target = tol * fro
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = a[i, j]
                if aij == 0.0:
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * aij)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                ci, cj = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * ci - s * cj
                a[:, j] = s * ci + c * cj
                ri, rj = a[i, :].copy(), a[j, :].copy()
                a[i, :] = c * ri - s * rj
                a[j, :] = s * ri + c * rj
                a[i, j] = a[j, i] = 0.0
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
    else:
        raise np.linalg.LinAlgError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(M: np.ndarray):
    """Symmetric eigendecomposition: Jacobi up to 64x64, LAPACK above."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] <= JACOBI_MAX_SIZE:
        return jacobi_eigh(M)
    return np.linalg.eigh(symmetrize(M))


def pinv(M: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Eigenvalues with ``|lam| <= rank_tol * max|lam|`` are treated as zero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w, V = eigh(M)
    wmax = np.max(np.abs(w)) if w.size else 0.0
    if wmax == 0.0:
        return np.zeros_like(M)
    keep = np.abs(w) > rank_tol * wmax
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return symmetrize((V * inv_w) @ V.T)


def min_eig(M: np.ndarray) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.inf
    return float(eigh(M)[0][0])


@dataclass(frozen=True)
class PsdVerdict:
    min_eig: float
    is_psd: bool
    margin: float
    margin_ok: bool

    def is_pd_with_margin(self, alpha: float, tol: float = TOL_PSD) -> bool:
        return self.min_eig >= alpha - tol


def psd_check(M: np.ndarray, margin: float = 0.0, tol: float = TOL_PSD) -> PsdVerdict:
    lam = min_eig(M)
    return PsdVerdict(
        min_eig=lam,
        is_psd=lam >= -tol,
        margin=margin,
        margin_ok=lam >= margin - tol,
    )


@dataclass(frozen=True)
class RangeCheck:
    ok: bool
    residual: float

    def __bool__(self) -> bool:
        return self.ok


def range_residual(H: np.ndarray, M: np.ndarray, M_pinv: np.ndarray | None = None) -> float:
    """``||(I - M M^+) H||_max``: zero iff every column of H lies in R(M)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    H = np.asarray(H, dtype=float).reshape(M.shape[0], -1)
    if M_pinv is None:
        M_pinv = pinv(M)
    R = H - M @ (M_pinv @ H)
    return float(np.max(np.abs(R))) if R.size else 0.0


def range_included(H: np.ndarray, M: np.ndarray, tol: float = TOL_RANGE) -> RangeCheck:
    """Is R(H) contained in R(M) for symmetric M?"""
    res = range_residual(H, M)
    return RangeCheck(ok=res <= tol, residual=res)


def safe_inverse(M: np.ndarray, rank_tol: float = RANK_TOL):
    """Inverse of a symmetric matrix, or its pseudo-inverse when singular.

    Returns ``(inverse, singular)``; ``singular`` is True when some
    eigenvalue fell under the rank threshold and the pseudo-inverse was used.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w, V = eigh(M)
    wmax = np.max(np.abs(w)) if w.size else 0.0
    small = np.abs(w) <= rank_tol * wmax if wmax > 0 else np.ones_like(w, dtype=bool)
    inv_w = np.zeros_like(w)
    inv_w[~small] = 1.0 / w[~small]
    return symmetrize((V * inv_w) @ V.T), bool(np.any(small))
