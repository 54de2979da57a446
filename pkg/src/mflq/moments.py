"""Exact moments and cost of affine feedback laws, plus a seeded Monte Carlo check.

Under u = Theta (x - m) + Thetabar m + v the centred state xt = x - m obeys

    xt+ = (A + B Theta) xt + [(C + D Theta) xt + c] w,
    c   = (C + Cbar) m + (D + Dbar) Eu + sigma,

so only E[w | past] = 0 and E[w^2 | past] = 1 are needed to propagate the
mean and covariance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import pmap
from .problem import ProblemData

BLOCK = 4096  # paths per random stream; fixed so results do not depend on the worker count


@dataclass
class MomentState:
    mean: np.ndarray    # (T+1, n)
    second: np.ndarray  # (T+1, n, n)  E x x'
    outer: np.ndarray   # (T+1, n, n)  m m'

    @property
    def covariance(self) -> np.ndarray:
        return self.second - self.outer


def propagate(p: ProblemData, s) -> MomentState:
    d = p.dynamics
    T, n = p.T, p.n
    mean = np.zeros((T + 1, n))
    cov = np.zeros((T + 1, n, n))
    mean[0] = p.initial.mean
    cov[0] = p.initial.covariance
    for t in range(T):
        m, S = mean[t], cov[t]
        Th = s.Theta[t]
        eu = s.Thetabar[t] @ m + s.v[t]
        F = d.A[t] + d.B[t] @ Th
        K = d.C[t] + d.D[t] @ Th
        c = (d.C[t] + d.Cbar[t]) @ m + (d.D[t] + d.Dbar[t]) @ eu + d.sigma[t]
        mean[t + 1] = (d.A[t] + d.Abar[t]) @ m + (d.B[t] + d.Bbar[t]) @ eu + d.b[t]
        S1 = F @ S @ F.T + K @ S @ K.T + np.outer(c, c)
        cov[t + 1] = 0.5 * (S1 + S1.T)
    outer = np.einsum("ti,tj->tij", mean, mean)
    return MomentState(mean, cov + outer, outer)


def closed_loop_cost(p: ProblemData, s) -> float:
    """Exact cost of the affine feedback law ``s``."""
    c = p.cost
    ms = propagate(p, s)
    total = 0.0
    for t in range(p.T):
        m, X = ms.mean[t], ms.second[t]
        S_ = ms.covariance[t]
        Th = s.Theta[t]
        eu = s.Thetabar[t] @ m + s.v[t]
        total += np.trace(c.Q[t] @ X)
        total += 2.0 * (np.trace(Th.T @ c.S[t] @ S_) + eu @ c.S[t] @ m)
        total += np.trace(Th.T @ c.R[t] @ Th @ S_) + eu @ c.R[t] @ eu
        total += m @ c.Qbar[t] @ m + 2.0 * eu @ c.Sbar[t] @ m + eu @ c.Rbar[t] @ eu
        total += 2.0 * (c.q[t] + c.qbar[t]) @ m + 2.0 * (c.rho[t] + c.rhobar[t]) @ eu
    m, X = ms.mean[p.T], ms.second[p.T]
    total += np.trace(c.G @ X) + m @ c.Gbar @ m + 2.0 * (c.g + c.gbar) @ m
    return float(total)


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    paths: int
    seed: int
    kind: str


def _block_costs(p: ProblemData, s, ms: MomentState, seed: int, kind: str, block: int, size: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    d, c = p.dynamics, p.cost
    atoms = rng.choice(len(p.initial.probs), size=size, p=p.initial.probs)
    if kind == "rademacher":
        noise = 2.0 * rng.integers(0, 2, size=(p.T, size)) - 1.0
    elif kind == "gaussian":
        noise = rng.standard_normal((p.T, size))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = p.initial.values[atoms]
    cost = np.zeros(size)
    for t in range(p.T):
        m = ms.mean[t]
        eu = s.Thetabar[t] @ m + s.v[t]
        u = (x - m) @ s.Theta[t].T + eu
        cost += np.einsum("pi,ij,pj->p", x, c.Q[t], x) + 2.0 * np.einsum("pi,ij,pj->p", u, c.S[t], x) \
            + np.einsum("pi,ij,pj->p", u, c.R[t], u) + 2.0 * x @ c.q[t] + 2.0 * u @ c.rho[t]
        cost += (m @ c.Qbar[t] @ m + 2.0 * eu @ c.Sbar[t] @ m + eu @ c.Rbar[t] @ eu
                 + 2.0 * c.qbar[t] @ m + 2.0 * c.rhobar[t] @ eu)
        drift = x @ d.A[t].T + u @ d.B[t].T + m @ d.Abar[t].T + eu @ d.Bbar[t].T + d.b[t]
        diff = x @ d.C[t].T + u @ d.D[t].T + m @ d.Cbar[t].T + eu @ d.Dbar[t].T + d.sigma[t]
        x = drift + noise[t][:, None] * diff
    m = ms.mean[p.T]
    cost += np.einsum("pi,ij,pj->p", x, c.G, x) + 2.0 * x @ c.g + m @ c.Gbar @ m + 2.0 * c.gbar @ m
    return cost


def simulate(p: ProblemData, s, paths: int, seed: int | None = None, kind: str | None = None) -> MonteCarloEstimate:
    """Sample-mean cost of the feedback law with its standard error.

    Paths are cut into fixed blocks of 4096; block b draws from a Philox
    stream keyed by ``(seed, b)``, so the estimate is the same for any number
    of workers.  Ex and Eu come from :func:`propagate`, not from the sample.
    """
    if paths < 1:
        raise ValueError("paths must be at least 1")
    seed = p.noise.seed if seed is None else int(seed)
    kind = kind or p.noise.kind
    ms = propagate(p, s)
    sizes = [min(BLOCK, paths - start) for start in range(0, paths, BLOCK)]
    parts = pmap(lambda b: _block_costs(p, s, ms, seed, kind, b, sizes[b]), range(len(sizes)))
    costs = np.concatenate(parts)
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / np.sqrt(paths)) if paths > 1 else float("nan")
    return MonteCarloEstimate(mean, se, paths, seed, kind)
