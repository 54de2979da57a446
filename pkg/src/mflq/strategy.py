"""Closed-loop synthesis, values, and the eps-regularized solvability scans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matnum, oracle
from ._parallel import pmap
from .affine import AffineSolution, solve_lre
from .problem import ProblemData
from .riccati import RiccatiError, RiccatiSolution, classify, solve_gre, solve_gre_eps

DIVERGENCE_CAP = 1e8
NORM_CAP = 1e8
CAUCHY_TOL = 1e-7
STABLE_TOL = 1e-6   # relative spread allowed over the stabilization window
WINDOW = 5


@dataclass
class ClosedLoopStrategy:
    """u_k = Theta_k (x_k - E x_k) + Thetabar_k E x_k + v_k for k = l..N-1."""

    Theta: np.ndarray     # (T, m, n)
    Thetabar: np.ndarray  # (T, m, n)
    v: np.ndarray         # (T, m)
    l: int = 0

    @classmethod
    def zero(cls, p: ProblemData) -> "ClosedLoopStrategy":
        z = np.zeros((p.T, p.m, p.n))
        return cls(z, z.copy(), np.zeros((p.T, p.m)), p.l)

    @classmethod
    def from_solutions(cls, sol: RiccatiSolution, aff: AffineSolution) -> "ClosedLoopStrategy":
        return cls(sol.Theta.copy(), sol.Thetabar.copy(), aff.v.copy(), sol.l)

    def control(self, k: int, x: np.ndarray, ex: np.ndarray) -> np.ndarray:
        t = k - self.l
        return (x - ex) @ self.Theta[t].T + ex @ self.Thetabar[t].T + self.v[t]

    def tree_control(self, p: ProblemData) -> oracle.TreeProcess:
        return oracle.closed_loop_control(p, self.Theta, self.Thetabar, self.v)


@dataclass
class ValueReport:
    value: float
    quadratic: float       # E <P_l (xi - E xi), xi - E xi>
    mean_quadratic: float  # <Pi_l E xi, E xi>
    linear: float          # 2 eta_l' E xi
    constant: float


@dataclass
class Unsolvable:
    reason: str
    failures: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return False


def value_at(p: ProblemData, sol: RiccatiSolution, aff: AffineSolution) -> ValueReport:
    """Optimal value from the Riccati and affine solutions, averaged over the initial atoms."""
    d = p.dynamics
    const = 0.0
    for t in range(p.T):
        z = aff.zeta[t]
        const += (2.0 * aff.eta[t + 1] @ d.b[t] + d.b[t] @ sol.Pi[t + 1] @ d.b[t]
                  + d.sigma[t] @ sol.P[t + 1] @ d.sigma[t] - z @ matnum.pinv(sol.Upsbar[t]) @ z)
    mean = p.initial.mean
    quad = float(np.trace(sol.P[0] @ p.initial.covariance))
    mquad = float(mean @ sol.Pi[0] @ mean)
    lin = float(2.0 * aff.eta[0] @ mean)
    const = float(const)
    return ValueReport(quad + mquad + lin + const, quad, mquad, lin, const)


def synthesize_closed_loop(p: ProblemData):
    """Optimal feedback and value, or :class:`Unsolvable` naming the failed condition."""
    sol = solve_gre(p)
    verdict = classify(sol)
    if not verdict.regular:
        first = verdict.failures[0]
        reason = {"psd": "not positive semidefinite", "range": "range inclusion fails",
                  "gain": "gain not finite"}[first.condition]
        return Unsolvable(f"{first.matrix} at k={first.k}: {reason}", verdict.failures)
    aff = solve_lre(p, sol)
    if not aff.certifying:
        k = p.l + int(np.flatnonzero(~aff.range_ok)[0])
        return Unsolvable(f"zeta at k={k} is not in the range of Upsbar")
    return ClosedLoopStrategy.from_solutions(sol, aff), value_at(p, sol, aff)


@dataclass
class MinimizingStep:
    eps: float
    strategy: ClosedLoopStrategy
    control: oracle.TreeProcess
    cost: float
    norm: float
    gain_sum: float
    a1_ok: bool               # Ups^eps, Upsbar^eps >= eps I held at every step
    singular_steps: tuple[int, ...]
    solution: RiccatiSolution


def _a1_margin_ok(sol: RiccatiSolution) -> bool:
    eps = sol.eps
    for M in list(sol.Ups) + list(sol.Upsbar):
        w = matnum.eigh(M)[0]
        scale = max(1.0, float(np.max(np.abs(w))))
        if w[0] < eps - matnum.TOL_PSD * scale:
            return False
    return not sol.singular_steps


def minimizing_sequence(p: ProblemData, eps: float) -> MinimizingStep:
    """Feedback of the eps-regularized problem, applied to the original one."""
    sol = solve_gre_eps(p, eps)
    aff = solve_lre(p, sol)
    strat = ClosedLoopStrategy.from_solutions(sol, aff)
    u = strat.tree_control(p)
    gain_sum = float(np.sum(sol.Theta ** 2) + np.sum(sol.Thetabar ** 2))
    return MinimizingStep(eps, strat, u, oracle.exact_cost(p, u), u.norm(), gain_sum,
                          _a1_margin_ok(sol), sol.singular_steps, sol)


def default_schedule(eps0: float = 1.0, steps: int = 40) -> list[float]:
    """eps_j = eps0 * 2**-j for j = 0..steps."""
    return [eps0 * 2.0**-j for j in range(steps + 1)]


def _check_schedule(schedule) -> list[float]:
    sched = [float(e) for e in schedule]
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be strictly decreasing and positive")
    return sched


def _stabilized(trace: np.ndarray, window: int = WINDOW, tol: float = STABLE_TOL) -> bool:
    if len(trace) < window:
        return False
    tail = trace[-window:]
    return float(np.max(tail) - np.min(tail)) <= tol * max(1.0, float(np.max(np.abs(tail))))


@dataclass
class FinitenessReport:
    verdict: str               # finite, infinite, undetermined
    reason: str
    eps: list[float]
    min_eig_P: np.ndarray
    min_eig_Pi: np.ndarray
    P_l: np.ndarray            # (len(eps), n, n)
    Pi_l: np.ndarray
    a1_ok: list[bool]


def finiteness_scan(p: ProblemData, schedule=None) -> FinitenessReport:
    """Decide whether the value is bounded below from the eps-solutions at time l.

    Any eps-solution with Ups^eps or Upsbar^eps below eps I means the
    homogeneous cost takes negative values, which forces an infinite value.
    """
    sched = _check_schedule(schedule if schedule is not None else default_schedule())

    def one(eps):
        try:
            sol = solve_gre_eps(p, eps)
        except RiccatiError:
            return None
        return sol

    sols = pmap(one, sched)
    n = p.n
    me_P = np.full(len(sched), -np.inf)
    me_Pi = np.full(len(sched), -np.inf)
    P_l = np.full((len(sched), n, n), np.nan)
    Pi_l = np.full((len(sched), n, n), np.nan)
    a1 = []
    for j, sol in enumerate(sols):
        if sol is None:
            a1.append(False)
            continue
        P_l[j], Pi_l[j] = sol.P[0], sol.Pi[0]
        me_P[j], me_Pi[j] = matnum.min_eig(sol.P[0]), matnum.min_eig(sol.Pi[0])
        a1.append(_a1_margin_ok(sol))
    report = dict(eps=sched, min_eig_P=me_P, min_eig_Pi=me_Pi, P_l=P_l, Pi_l=Pi_l, a1_ok=a1)
    if p.info == "adapted" and oracle.stacked_dimension(p) <= oracle.GUARD:
        # the Riccati characterization presumes controls blind to the current
        # noise; with adapted controls the tree oracle has the last word
        lam = oracle.assemble_quadratic(oracle.homogeneous_zero_start(p)).min_eig
        if lam < -oracle.EIG_TOL:
            return FinitenessReport("infinite", f"adapted controls: homogeneous cost has eigenvalue {lam:.6g} < 0",
                                    **report)
    if not all(a1):
        j = a1.index(False)
        return FinitenessReport("infinite", f"eps={sched[j]:.6g}: regularized solution lacks the eps margin, "
                                "so the homogeneous cost is not nonnegative", **report)
    low = min(float(np.min(me_P)), float(np.min(me_Pi)))
    if not np.isfinite(low) or low < -DIVERGENCE_CAP:
        return FinitenessReport("infinite", "eps-trace decreases past the divergence cap", **report)
    if _stabilized(me_P) and _stabilized(me_Pi):
        return FinitenessReport("finite", "eps-trace bounded below and stabilized", **report)
    return FinitenessReport("undetermined", "eps-trace bounded but not stabilized", **report)


@dataclass
class OpenLoopReport:
    verdict: str               # solvable, unsolvable, undetermined
    reason: str
    eps: list[float]
    costs: list[float]
    norms: list[float]
    diffs: list[float]         # ||u^{eps_{j+1}} - u^{eps_j}||
    gain_sup: list[float]
    control: oracle.TreeProcess | None
    stationarity: float | None


def detect_open_loop(p: ProblemData, schedule=None, finiteness: FinitenessReport | None = None) -> OpenLoopReport:
    """Follow u^eps down the schedule and look for an L2 limit."""
    sched = _check_schedule(schedule if schedule is not None else default_schedule())
    fin = finiteness or finiteness_scan(p, sched)
    if fin.verdict != "finite":
        verdict = "unsolvable" if fin.verdict == "infinite" else "undetermined"
        return OpenLoopReport(verdict, f"not attempted: finiteness {fin.verdict}", sched,
                              [], [], [], [], None, None)
    steps = pmap(lambda e: minimizing_sequence(p, e), sched)
    costs = [s.cost for s in steps]
    norms = [s.norm for s in steps]
    gains = [s.gain_sum for s in steps]
    diffs = [(b.control - a.control).norm() for a, b in zip(steps, steps[1:])]
    last = steps[-1].control
    if max(norms) > NORM_CAP:
        return OpenLoopReport("unsolvable", "L2 norms of u^eps exceed the cap", sched, costs, norms,
                              diffs, gains, None, None)
    tail = diffs[-WINDOW:]
    if len(tail) == WINDOW and max(tail) < CAUCHY_TOL:
        res = oracle.stationarity_residual(p, last)
        if res <= oracle.RES_TOL:
            return OpenLoopReport("solvable", "bounded norms with a Cauchy tail", sched, costs, norms,
                                  diffs, gains, last, res)
        return OpenLoopReport("undetermined", f"limit fails the stationarity certificate ({res:.3g})",
                              sched, costs, norms, diffs, gains, last, res)
    return OpenLoopReport("undetermined", "norms bounded but no Cauchy tail", sched, costs, norms,
                          diffs, gains, None, None)


@dataclass
class SolvabilityReport:
    finiteness: FinitenessReport
    open_loop: OpenLoopReport
    closed_loop: object        # (ClosedLoopStrategy, ValueReport) or Unsolvable

    @property
    def closed_loop_solvable(self) -> bool:
        return not isinstance(self.closed_loop, Unsolvable)

    def consistent(self) -> bool:
        """closed-loop solvable => open-loop solvable => finite."""
        if self.closed_loop_solvable and self.open_loop.verdict == "unsolvable":
            return False
        if self.open_loop.verdict == "solvable" and self.finiteness.verdict != "finite":
            return False
        return True


def solvability(p: ProblemData, schedule=None) -> SolvabilityReport:
    fin = finiteness_scan(p, schedule)
    ol = detect_open_loop(p, schedule, fin)
    closed = synthesize_closed_loop(p)
    if fin.verdict == "infinite" and not isinstance(closed, Unsolvable):
        closed = Unsolvable(f"value is not finite ({fin.reason})")
    return SolvabilityReport(fin, ol, closed)
