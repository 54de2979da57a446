"""Exact ground truth on a finite noise tree.

The initial state takes finitely many values (atoms) and every noise is a
fair +-1 coin, so the whole probability space is a finite tree: depth d
holds ``atoms * 2**d`` nodes.  Node ``j`` at depth d has children ``2j``
(noise +1) and ``2j + 1`` (noise -1), and the atom of a node is
``j >> d``.  Processes are arrays indexed by node, expectations are exact
probability-weighted sums, and the cost is an explicit quadratic function
of the stacked control coordinates.

Controls at time k live at depth k - l under the predictable pattern and at
depth k - l + 1 under the adapted pattern (they may then see the noise of
the same transition).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._parallel import pmap
from .problem import ProblemData

GUARD = 20000
EIG_TOL = 1e-9
RES_TOL = 1e-8


class OracleGuardError(ValueError):
    """Stacked control dimension is beyond what the dense oracle accepts."""


@dataclass(frozen=True)
class NoiseTree:
    atoms: np.ndarray  # (na, n)
    probs: np.ndarray  # (na,)
    T: int

    @classmethod
    def from_problem(cls, p: ProblemData) -> "NoiseTree":
        return cls(p.initial.values, p.initial.probs, p.T)

    @property
    def n_atoms(self) -> int:
        return len(self.probs)

    def n_nodes(self, d: int) -> int:
        return self.n_atoms * 2**d

    def node_probs(self, d: int) -> np.ndarray:
        return np.repeat(self.probs, 2**d) / 2.0**d

    def signs(self, d: int) -> np.ndarray:
        """Sign of the most recent noise for each node at depth d >= 1."""
        return np.tile([1.0, -1.0], self.n_nodes(d - 1))

    def history(self, d: int) -> np.ndarray:
        """(nodes, d) array of the noise signs leading to each node at depth d."""
        idx = np.arange(self.n_nodes(d))
        bits = (idx[:, None] >> np.arange(d - 1, -1, -1)[None, :]) & 1
        return 1.0 - 2.0 * bits

    def atom_index(self, d: int) -> np.ndarray:
        return np.arange(self.n_nodes(d)) >> d


@dataclass
class TreeProcess:
    """One array per time: ``values[t]`` has shape (nodes at depths[t], dim)."""

    tree: NoiseTree
    depths: tuple[int, ...]
    values: list

    @property
    def dim(self) -> int:
        return self.values[0].shape[-1] if self.values else 0

    @cached_property
    def weights(self) -> np.ndarray:
        """Probability of the node behind each stacked coordinate."""
        return np.concatenate([np.repeat(self.tree.node_probs(d), self.dim) for d in self.depths]) \
            if self.values else np.zeros(0)

    def stack(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values]) if self.values else np.zeros(0)

    def with_stack(self, vec: np.ndarray) -> "TreeProcess":
        vals, pos = [], 0
        for v in self.values:
            vals.append(np.asarray(vec[pos:pos + v.size], dtype=float).reshape(v.shape))
            pos += v.size
        return TreeProcess(self.tree, self.depths, vals)

    def mean(self, t: int) -> np.ndarray:
        return self.tree.node_probs(self.depths[t]) @ self.values[t]

    def inner(self, other: "TreeProcess") -> float:
        return float(np.sum(self.weights * self.stack() * other.stack()))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def _combine(self, other, op) -> "TreeProcess":
        if isinstance(other, TreeProcess):
            return TreeProcess(self.tree, self.depths, [op(a, b) for a, b in zip(self.values, other.values)])
        return TreeProcess(self.tree, self.depths, [op(a, other) for a in self.values])

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        return self._combine(float(c), np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_table(self, l: int) -> list[dict]:
        """Rows ``{k, node, atom, history, value}`` for reports."""
        rows = []
        for t, (d, vals) in enumerate(zip(self.depths, self.values)):
            hist = self.tree.history(d)
            atoms = self.tree.atom_index(d)
            for j in range(vals.shape[0]):
                rows.append({"k": l + t, "node": j, "atom": int(atoms[j]),
                             "history": [int(s) for s in hist[j]], "value": vals[j].tolist()})
        return rows


def control_depths(p: ProblemData) -> tuple[int, ...]:
    shift = 1 if p.info == "adapted" else 0
    return tuple(t + shift for t in range(p.T))


def zero_control(p: ProblemData) -> TreeProcess:
    tree = NoiseTree.from_problem(p)
    depths = control_depths(p)
    return TreeProcess(tree, depths, [np.zeros((tree.n_nodes(d), p.m)) for d in depths])


def random_control(p: ProblemData, rng: np.random.Generator, scale: float = 1.0) -> TreeProcess:
    u = zero_control(p)
    return u.with_stack(scale * rng.standard_normal(u.stack().size))


def control_from(p: ProblemData, fn) -> TreeProcess:
    """Build a control from ``fn(k, xi, noises) -> m-vector``.

    ``noises`` lists the signs of the noises the control may observe (those
    of steps l, ..., k-1, plus step k under the adapted pattern).
    """
    u = zero_control(p)
    tree = u.tree
    vals = []
    for t, d in enumerate(u.depths):
        hist = tree.history(d)
        atoms = tree.atom_index(d)
        vals.append(np.array([np.atleast_1d(fn(p.l + t, tree.atoms[a], tuple(h)))
                              for a, h in zip(atoms, hist)], dtype=float).reshape(-1, p.m))
    return TreeProcess(tree, u.depths, vals)


def _wmean(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("j,...jn->...n", w, x)


class _Path:
    """Forward trajectory with the exact means it generated."""

    def __init__(self, xs, us, ex, eu):
        self.xs, self.us, self.ex, self.eu = xs, us, ex, eu


def _forward(p: ProblemData, tree: NoiseTree, us: list, x0: np.ndarray, affine: bool = True) -> _Path:
    adapted = p.info == "adapted"
    d = p.dynamics
    xs, ex_list, eu_list = [x0], [], []
    x = x0
    for t in range(p.T):
        ex = _wmean(tree.node_probs(t), x)
        u = us[t]
        eu = _wmean(tree.node_probs(t + 1 if adapted else t), u)
        xc = np.repeat(x, 2, axis=-2)
        uc = u if adapted else np.repeat(u, 2, axis=-2)
        s = tree.signs(t + 1)[:, None]
        drift = xc @ d.A[t].T + uc @ d.B[t].T + (ex @ d.Abar[t].T + eu @ d.Bbar[t].T)[..., None, :]
        diff = xc @ d.C[t].T + uc @ d.D[t].T + (ex @ d.Cbar[t].T + eu @ d.Dbar[t].T)[..., None, :]
        if affine:
            drift = drift + d.b[t]
            diff = diff + d.sigma[t]
        x = drift + s * diff
        xs.append(x)
        ex_list.append(ex)
        eu_list.append(eu)
    ex_list.append(_wmean(tree.node_probs(p.T), x))
    return _Path(xs, us, ex_list, eu_list)


def _quad(w, a, M, b):
    """sum_j w_j a_j' M b_j over the node axis (batched)."""
    return np.einsum("j,...ji,ik,...jk->...", w, a, M, b)


def _cost(p: ProblemData, tree: NoiseTree, path: _Path, affine: bool = True) -> np.ndarray:
    adapted = p.info == "adapted"
    c = p.cost
    total = 0.0
    for t in range(p.T):
        x, u, ex, eu = path.xs[t], path.us[t], path.ex[t], path.eu[t]
        px = tree.node_probs(t)
        pu = tree.node_probs(t + 1) if adapted else px
        xu = np.repeat(x, 2, axis=-2) if adapted else x
        total = total + _quad(px, x, c.Q[t], x) + 2.0 * _quad(pu, u, c.S[t], xu) + _quad(pu, u, c.R[t], u)
        total = total + np.einsum("...i,ik,...k->...", ex, c.Qbar[t], ex) \
            + 2.0 * np.einsum("...i,ik,...k->...", eu, c.Sbar[t], ex) \
            + np.einsum("...i,ik,...k->...", eu, c.Rbar[t], eu)
        if affine:
            total = total + 2.0 * ex @ (c.q[t] + c.qbar[t]) + 2.0 * eu @ (c.rho[t] + c.rhobar[t])
    x, ex = path.xs[p.T], path.ex[p.T]
    total = total + _quad(tree.node_probs(p.T), x, c.G, x) + np.einsum("...i,ik,...k->...", ex, c.Gbar, ex)
    if affine:
        total = total + 2.0 * ex @ (c.g + c.gbar)
    return total


def _pairs(y: np.ndarray):
    """Split depth-(d+1) values into the (+1, -1) children of each depth-d node."""
    shape = y.shape[:-2] + (y.shape[-2] // 2, 2, y.shape[-1])
    yy = y.reshape(shape)
    return yy[..., 0, :], yy[..., 1, :]


def _backward(p: ProblemData, tree: NoiseTree, path: _Path, affine: bool = True):
    """Costates y_k (depth k - l) and half-gradients with respect to u_k."""
    adapted = p.info == "adapted"
    d, c = p.dynamics, p.cost
    T = p.T
    y = path.xs[T] @ c.G.T + (path.ex[T] @ c.Gbar.T)[..., None, :]
    if affine:
        y = y + c.g + c.gbar
    ys = [None] * (T + 1)
    grads = [None] * T
    ys[T] = y
    for t in range(T - 1, -1, -1):
        x, u, ex, eu = path.xs[t], path.us[t], path.ex[t], path.eu[t]
        s = tree.signs(t + 1)[:, None]
        w1 = tree.node_probs(t + 1)
        y_plus, y_minus = _pairs(y)
        cm = 0.5 * (y_plus + y_minus)      # E(y+ | past)
        co = 0.5 * (y_plus - y_minus)      # E(y+ w | past)
        Ey = _wmean(w1, y)
        Eyw = _wmean(w1, y * s)
        mean_part = (Ey @ d.Bbar[t] + Eyw @ d.Dbar[t] + ex @ c.Sbar[t].T + eu @ c.Rbar[t].T)[..., None, :]
        if adapted:
            g = y @ d.B[t] + (y * s) @ d.D[t] + np.repeat(x, 2, axis=-2) @ c.S[t].T + u @ c.R[t].T
            u_past = 0.5 * (_pairs(u)[0] + _pairs(u)[1])
        else:
            g = cm @ d.B[t] + co @ d.D[t] + x @ c.S[t].T + u @ c.R[t].T
            u_past = u
        g = g + mean_part
        if affine:
            g = g + c.rho[t] + c.rhobar[t]
        grads[t] = g
        y = (cm @ d.A[t] + co @ d.C[t] + x @ c.Q[t].T + u_past @ c.S[t]
             + (Ey @ d.Abar[t] + Eyw @ d.Cbar[t] + ex @ c.Qbar[t].T + eu @ c.Sbar[t])[..., None, :])
        if affine:
            y = y + c.q[t] + c.qbar[t]
        ys[t] = y
    return ys, grads


def _check_control(p: ProblemData, u: TreeProcess) -> None:
    """A control may be reused on any problem sharing its atom weights and horizon."""
    tree = u.tree
    if tree.T != p.T or tree.n_atoms != len(p.initial.probs) or not np.array_equal(tree.probs, p.initial.probs):
        raise ValueError("control lives on a tree with different atom weights or horizon")
    depths = control_depths(p)
    if tuple(u.depths) != depths or len(u.values) != p.T:
        raise ValueError(f"control layout {u.depths} does not match the {p.info} pattern {depths}")
    for t, (dd, v) in enumerate(zip(depths, u.values)):
        if v.shape != (u.tree.n_nodes(dd), p.m):
            raise ValueError(f"control at k={p.l + t}: expected shape {(u.tree.n_nodes(dd), p.m)}, got {v.shape}")


def _x0(p: ProblemData, tree: NoiseTree) -> np.ndarray:
    # the initial state always comes from p; the tree only supplies the structure
    return np.asarray(p.initial.values, dtype=float).reshape(tree.n_atoms, p.n)


def rollout(p: ProblemData, u: TreeProcess) -> TreeProcess:
    """State process x_l, ..., x_N (x_k at depth k - l)."""
    _check_control(p, u)
    path = _forward(p, u.tree, u.values, _x0(p, u.tree))
    return TreeProcess(u.tree, tuple(range(p.T + 1)), path.xs)


def exact_cost(p: ProblemData, u: TreeProcess) -> float:
    _check_control(p, u)
    path = _forward(p, u.tree, u.values, _x0(p, u.tree))
    return float(_cost(p, u.tree, path))


def fbsde_backward(p: ProblemData, u: TreeProcess, x: TreeProcess | None = None) -> TreeProcess:
    """Costate process y_l, ..., y_N of the control u."""
    _check_control(p, u)
    path = _forward(p, u.tree, u.values, _x0(p, u.tree))
    if x is not None and not all(np.allclose(a, b, rtol=1e-12, atol=1e-12) for a, b in zip(x.values, path.xs)):
        raise ValueError("x is not the state process generated by u")
    ys, _ = _backward(p, u.tree, path)
    return TreeProcess(u.tree, tuple(range(p.T + 1)), ys)


def _half_gradient(p: ProblemData, u: TreeProcess) -> TreeProcess:
    _check_control(p, u)
    path = _forward(p, u.tree, u.values, _x0(p, u.tree))
    _, grads = _backward(p, u.tree, path)
    return TreeProcess(u.tree, u.depths, grads)


def gateaux_derivative(p: ProblemData, u: TreeProcess) -> TreeProcess:
    """dJ(u) in the probability-weighted inner product: J(u + h v) = J(u) + h <dJ(u), v> + O(h^2)."""
    return 2.0 * _half_gradient(p, u)


def stationarity_residual(p: ProblemData, u: TreeProcess) -> float:
    """Max-norm of the first-order optimality expression over all times and nodes."""
    g = _half_gradient(p, u)
    vals = g.stack()
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def costate_value(p: ProblemData, u: TreeProcess) -> float:
    """E(y_l' xi) for the costate generated by u."""
    y = fbsde_backward(p, u)
    w = u.tree.probs
    return float(np.sum(w * np.einsum("an,an->a", y.values[0], _x0(p, u.tree))))


def closed_loop_control(p: ProblemData, Theta, Thetabar, v) -> TreeProcess:
    """Control generated on the tree by u = Theta (x - Ex) + Thetabar Ex + v."""
    tree = NoiseTree.from_problem(p)
    adapted = p.info == "adapted"
    d = p.dynamics
    x = _x0(p, tree)
    vals = []
    for t in range(p.T):
        ex = tree.node_probs(t) @ x
        u = (x - ex) @ Theta[t].T + ex @ Thetabar[t].T + v[t]
        eu = ex @ Thetabar[t].T + v[t]
        uc = np.repeat(u, 2, axis=0)
        vals.append(uc if adapted else u)
        xc = np.repeat(x, 2, axis=0)
        s = tree.signs(t + 1)[:, None]
        drift = xc @ d.A[t].T + uc @ d.B[t].T + ex @ d.Abar[t].T + eu @ d.Bbar[t].T + d.b[t]
        diff = xc @ d.C[t].T + uc @ d.D[t].T + ex @ d.Cbar[t].T + eu @ d.Dbar[t].T + d.sigma[t]
        x = drift + s * diff
    return TreeProcess(tree, control_depths(p), vals)


@dataclass
class QuadraticModel:
    """J(u) = z'Mz + d'z + c0 with z = sqrt(node probability) * stacked u.

    In these scaled coordinates the Euclidean inner product is the
    probability-weighted one, so M is the symmetric Hessian operator of the
    cost on the space of admissible controls and its eigenvalues are
    Rayleigh quotients J0(v) / ||v||^2.
    """

    M: np.ndarray
    d: np.ndarray
    c0: float
    sqrt_w: np.ndarray
    template: TreeProcess

    @property
    def size(self) -> int:
        return self.d.size

    def coords(self, u: TreeProcess) -> np.ndarray:
        return self.sqrt_w * u.stack()

    def process(self, z: np.ndarray) -> TreeProcess:
        return self.template.with_stack(np.asarray(z) / self.sqrt_w)

    def evaluate(self, u: TreeProcess) -> float:
        z = self.coords(u)
        return float(z @ self.M @ z + self.d @ z + self.c0)

    @cached_property
    def eigen(self):
        return np.linalg.eigh(self.M)

    @property
    def min_eig(self) -> float:
        return float(self.eigen[0][0]) if self.size else np.inf


def stacked_dimension(p: ProblemData) -> int:
    na = len(p.initial.probs)
    return p.m * sum(na * 2**d for d in control_depths(p))


def assemble_quadratic(p: ProblemData, chunk: int = 256) -> QuadraticModel:
    """Dense quadratic model of the cost over the stacked control coordinates."""
    size = stacked_dimension(p)
    if size > GUARD:
        raise OracleGuardError(f"stacked control dimension {size} exceeds the guard of {GUARD}")
    template = zero_control(p)
    tree = template.tree
    sqrt_w = np.sqrt(template.weights)
    hom = p.homogeneous_part()
    offsets = np.cumsum([0] + [v.size for v in template.values])

    def columns(start: int) -> np.ndarray:
        idx = np.arange(start, min(start + chunk, size))
        batch = len(idx)
        us = []
        for t, v in enumerate(template.values):
            block = np.zeros((batch, v.size))
            inside = (idx >= offsets[t]) & (idx < offsets[t + 1])
            block[np.nonzero(inside)[0], idx[inside] - offsets[t]] = 1.0
            us.append(block.reshape((batch,) + v.shape))
        x0 = np.zeros((batch, tree.n_atoms, p.n))
        path = _forward(hom, tree, us, x0, affine=False)
        _, grads = _backward(hom, tree, path, affine=False)
        return np.concatenate([g.reshape(batch, -1) for g in grads], axis=1)

    blocks = pmap(columns, range(0, size, chunk))
    M_op = np.concatenate(blocks, axis=0).T if blocks else np.zeros((0, 0))
    M = sqrt_w[:, None] * M_op / sqrt_w[None, :]
    M = 0.5 * (M + M.T)
    zero = template
    d = sqrt_w * gateaux_derivative(p, zero).stack()
    c0 = exact_cost(p, zero)
    return QuadraticModel(M=M, d=d, c0=c0, sqrt_w=sqrt_w, template=template)


@dataclass
class ExactSolution:
    status: str                # minimizer, no_minimizer, unbounded
    control: TreeProcess | None
    value: float
    min_eig: float
    range_residual: float = 0.0
    model: QuadraticModel | None = None

    @property
    def has_minimizer(self) -> bool:
        return self.status == "minimizer"


def solve_exact(p: ProblemData, model: QuadraticModel | None = None,
                eig_tol: float = EIG_TOL, res_tol: float = RES_TOL) -> ExactSolution:
    """Minimize the exact quadratic cost over all tree controls.

    ``unbounded``: J0 takes negative values, so the infimum is minus infinity.
    ``no_minimizer``: J0 is nonnegative but the linear term has a component
    in its null space, which again drives the cost to minus infinity.
    """
    model = model or assemble_quadratic(p)
    if model.size == 0:
        return ExactSolution("minimizer", model.template, model.c0, np.inf, 0.0, model)
    w, V = model.eigen
    lam = float(w[0])
    if lam < -eig_tol:
        return ExactSolution("unbounded", None, -np.inf, lam, 0.0, model)
    c = V.T @ model.d
    null = np.abs(w) <= eig_tol
    resid = float(np.max(np.abs(V[:, null] @ c[null]))) if np.any(null) else 0.0
    if resid > res_tol:
        return ExactSolution("no_minimizer", None, -np.inf, lam, resid, model)
    coef = np.zeros_like(c)
    coef[~null] = c[~null] / w[~null]
    z = -0.5 * (V @ coef)
    value = model.c0 - 0.25 * float(np.sum(c[~null] * coef[~null]))
    return ExactSolution("minimizer", model.process(z), value, lam, resid, model)


def homogeneous_zero_start(p: ProblemData) -> ProblemData:
    """Homogeneous version with the same atom structure but x_l = 0."""
    from .problem import InitialDistribution
    init = InitialDistribution(np.zeros_like(p.initial.values), p.initial.probs.copy())
    return p.homogeneous_part().with_initial(init)
