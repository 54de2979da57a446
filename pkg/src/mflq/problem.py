"""Problem instances: data model, validation and the JSON file format.

A problem is the state equation

    x_{k+1} = A x + Abar Ex + B u + Bbar Eu + b
              + (C x + Cbar Ex + D u + Dbar Eu + sigma) w_k

for k = l, ..., N-1 together with a quadratic cost that has mean-field
terms, a terminal cost, a finite-atom initial law and an information
pattern.  Time-indexed coefficients are stored as stacked arrays whose
leading axis is t = k - l.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from . import jsonio
from .matnum import SYM_TOL, asymmetry

InfoKind = Literal["predictable", "adapted"]
NoiseKind = Literal["rademacher", "gaussian"]

DYNAMICS_KEYS = ("A", "Abar", "B", "Bbar", "C", "Cbar", "D", "Dbar", "b", "sigma")
COST_KEYS = ("Q", "Qbar", "S", "Sbar", "R", "Rbar", "q", "qbar", "rho", "rhobar")
TERMINAL_KEYS = ("G", "Gbar", "g", "gbar")
SYMMETRIC_KEYS = ("Q", "Qbar", "R", "Rbar", "G", "Gbar")
AFFINE_KEYS = ("b", "sigma", "q", "qbar", "rho", "rhobar", "g", "gbar")


class ProblemError(ValueError):
    """Base class for malformed problem input."""


class ParseError(ProblemError):
    pass


class ShapeError(ProblemError):
    pass


class SymmetryError(ProblemError):
    pass


@dataclass(frozen=True)
class Dimensions:
    n: int
    m: int
    l: int
    N: int

    @property
    def T(self) -> int:
        """Number of transitions N - l."""
        return self.N - self.l


def _shapes(n: int, m: int) -> dict[str, tuple[int, ...]]:
    return {
        "A": (n, n), "Abar": (n, n), "B": (n, m), "Bbar": (n, m),
        "C": (n, n), "Cbar": (n, n), "D": (n, m), "Dbar": (n, m),
        "b": (n,), "sigma": (n,),
        "Q": (n, n), "Qbar": (n, n), "S": (m, n), "Sbar": (m, n),
        "R": (m, m), "Rbar": (m, m), "q": (n,), "qbar": (n,),
        "rho": (m,), "rhobar": (m,),
        "G": (n, n), "Gbar": (n, n), "g": (n,), "gbar": (n,),
    }


@dataclass(frozen=True)
class Dynamics:
    A: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    Bbar: np.ndarray
    C: np.ndarray
    Cbar: np.ndarray
    D: np.ndarray
    Dbar: np.ndarray
    b: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class CostData:
    Q: np.ndarray
    Qbar: np.ndarray
    S: np.ndarray
    Sbar: np.ndarray
    R: np.ndarray
    Rbar: np.ndarray
    q: np.ndarray
    qbar: np.ndarray
    rho: np.ndarray
    rhobar: np.ndarray
    G: np.ndarray
    Gbar: np.ndarray
    g: np.ndarray
    gbar: np.ndarray


@dataclass(frozen=True)
class InitialDistribution:
    values: np.ndarray  # (atoms, n)
    probs: np.ndarray   # (atoms,)

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.values

    @property
    def covariance(self) -> np.ndarray:
        c = self.values - self.mean
        return (c.T * self.probs) @ c

    @property
    def second_moment(self) -> np.ndarray:
        return (self.values.T * self.probs) @ self.values

    @classmethod
    def deterministic(cls, x0) -> "InitialDistribution":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return cls(values=x0[None, :], probs=np.ones(1))

    @classmethod
    def from_atoms(cls, atoms) -> "InitialDistribution":
        """``atoms`` is an iterable of ``(value, prob)`` pairs."""
        atoms = list(atoms)
        values = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for v, _ in atoms])
        probs = np.array([float(p) for _, p in atoms])
        return cls(values=values, probs=probs)


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = "rademacher"
    seed: int = 0


@dataclass(frozen=True)
class ProblemData:
    dims: Dimensions
    dynamics: Dynamics
    cost: CostData
    initial: InitialDistribution
    noise: NoiseModel = field(default_factory=NoiseModel)
    info: InfoKind = "predictable"

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def m(self) -> int:
        return self.dims.m

    @property
    def l(self) -> int:
        return self.dims.l

    @property
    def N(self) -> int:
        return self.dims.N

    @property
    def T(self) -> int:
        return self.dims.T

    @property
    def homogeneous(self) -> bool:
        arrays = [getattr(self.dynamics, k) for k in ("b", "sigma")]
        arrays += [getattr(self.cost, k) for k in AFFINE_KEYS if k not in ("b", "sigma")]
        return all(not np.any(a) for a in arrays)

    def homogeneous_part(self) -> "ProblemData":
        """Same problem with every affine term (b, sigma, q, rho, g and bars) set to zero."""
        dyn = replace(self.dynamics, b=np.zeros_like(self.dynamics.b),
                      sigma=np.zeros_like(self.dynamics.sigma))
        zeros = {k: np.zeros_like(getattr(self.cost, k)) for k in AFFINE_KEYS if hasattr(self.cost, k)}
        return replace(self, dynamics=dyn, cost=replace(self.cost, **zeros))

    def with_initial(self, initial: InitialDistribution) -> "ProblemData":
        return replace(self, initial=initial)

    def with_info(self, kind: InfoKind) -> "ProblemData":
        return replace(self, info=kind)

    def with_noise(self, kind: NoiseKind | None = None, seed: int | None = None) -> "ProblemData":
        noise = NoiseModel(kind=kind or self.noise.kind,
                           seed=self.noise.seed if seed is None else seed)
        return replace(self, noise=noise)

    def shifted(self, eps: float) -> "ProblemData":
        """R -> R + eps I (so R + Rbar -> R + Rbar + eps I as well)."""
        R = self.cost.R + eps * np.eye(self.m)[None, :, :]
        return replace(self, cost=replace(self.cost, R=R))

    def to_dict(self) -> dict:
        dyn, cost = self.dynamics, self.cost
        return {
            "dims": {"n": self.n, "m": self.m, "l": self.l, "N": self.N},
            "dynamics": [{k: getattr(dyn, k)[t].tolist() for k in DYNAMICS_KEYS} for t in range(self.T)],
            "cost": [{k: getattr(cost, k)[t].tolist() for k in COST_KEYS} for t in range(self.T)],
            "terminal": {k: getattr(cost, k).tolist() for k in TERMINAL_KEYS},
            "initial": {"atoms": [{"value": v.tolist(), "prob": float(p)}
                                  for v, p in zip(self.initial.values, self.initial.probs)]},
            "noise": {"kind": self.noise.kind, "seed": int(self.noise.seed)},
            "info": {"kind": self.info},
        }


def _coerce(value, shape: tuple[int, ...], name: str, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{name}{where}: not numeric ({exc})") from None
    if arr.shape == shape:
        return arr.copy()
    size = int(np.prod(shape))
    # vector-like targets (n x 1, 1 x m, scalars) accept a flat list or a scalar
    if arr.ndim <= 1 and arr.size == size and size == max(shape, default=1):
        return arr.reshape(shape).copy()
    raise ShapeError(f"{name}{where}: expected shape {shape}, got {arr.shape}")


def _stack(entries, keys, shapes, T: int, section: str, l: int) -> dict[str, np.ndarray]:
    out = {}
    for key in keys:
        shape = shapes[key]
        out[key] = np.zeros((T,) + shape)
    for t, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ParseError(f"{section}[{t}] must be an object")
        unknown = set(entry) - set(keys)
        if unknown:
            raise ParseError(f"{section} at k={l + t}: unknown keys {sorted(unknown)}")
        for key, value in entry.items():
            out[key][t] = _coerce(value, shapes[key], key, f" at k={l + t}")
    return out


def build_problem(n: int, m: int, N: int, l: int = 0, *, initial=None,
                  noise: NoiseModel | None = None, info: InfoKind = "predictable",
                  **coeffs) -> ProblemData:
    """Construct a problem from keyword coefficients.

    Each time-indexed coefficient may be a single array (used at every k) or a
    sequence of N - l arrays.  Omitted coefficients are zero.  ``initial`` is
    an :class:`InitialDistribution`, a list of ``(value, prob)`` pairs, or a
    vector for a deterministic start (default: the zero vector).
    """
    T = N - l
    shapes = _shapes(n, m)
    unknown = set(coeffs) - set(shapes)
    if unknown:
        raise TypeError(f"unknown coefficients {sorted(unknown)}")
    stacked = {}
    for key in DYNAMICS_KEYS + COST_KEYS:
        shape = shapes[key]
        val = coeffs.get(key)
        if val is None:
            stacked[key] = np.zeros((max(T, 0),) + shape)
            continue
        arr = np.asarray(val, dtype=float)
        if arr.ndim == len(shape) + 1 and arr.shape[0] == T:
            stacked[key] = np.array([_coerce(v, shape, key, f" at k={l + t}") for t, v in enumerate(arr)])
        else:
            one = _coerce(val, shape, key, "")
            stacked[key] = np.broadcast_to(one, (max(T, 0),) + shape).copy()
    terminal = {k: _coerce(coeffs.get(k, np.zeros(shapes[k])), shapes[k], k, "") for k in TERMINAL_KEYS}
    if initial is None:
        initial = InitialDistribution.deterministic(np.zeros(n))
    elif not isinstance(initial, InitialDistribution):
        if isinstance(initial, (list, tuple)) and initial and isinstance(initial[0], tuple):
            initial = InitialDistribution.from_atoms(initial)
        else:
            initial = InitialDistribution.deterministic(initial)
    dyn = Dynamics(**{k: stacked[k] for k in DYNAMICS_KEYS})
    cost = CostData(**{k: stacked[k] for k in COST_KEYS}, **terminal)
    return ProblemData(Dimensions(n, m, l, N), dyn, cost, initial, noise or NoiseModel(), info)


def problem_from_dict(doc: dict) -> ProblemData:
    """Parse the documented JSON structure (no validation beyond shapes)."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    try:
        dims = doc["dims"]
        n, m, l, N = (int(dims[k]) for k in ("n", "m", "l", "N"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"dims: missing or invalid field ({exc})") from None
    T = N - l
    shapes = _shapes(n, m)
    dyn_entries = doc.get("dynamics", [])
    cost_entries = doc.get("cost", [])
    for section, entries in (("dynamics", dyn_entries), ("cost", cost_entries)):
        if not isinstance(entries, list):
            raise ParseError(f"{section} must be an array")
        if len(entries) not in (0, max(T, 0)):
            raise ShapeError(f"{section}: expected {max(T, 0)} entries, got {len(entries)}")
    dyn = _stack(dyn_entries, DYNAMICS_KEYS, shapes, max(T, 0), "dynamics", l)
    cost = _stack(cost_entries, COST_KEYS, shapes, max(T, 0), "cost", l)
    term_doc = doc.get("terminal", {})
    if not isinstance(term_doc, dict):
        raise ParseError("terminal must be an object")
    unknown = set(term_doc) - set(TERMINAL_KEYS)
    if unknown:
        raise ParseError(f"terminal: unknown keys {sorted(unknown)}")
    terminal = {k: _coerce(term_doc.get(k, np.zeros(shapes[k])), shapes[k], k, "") for k in TERMINAL_KEYS}

    atoms_doc = doc.get("initial", {"atoms": [{"value": [0.0] * n, "prob": 1.0}]})
    try:
        atoms = atoms_doc["atoms"]
        values = np.array([_coerce(a["value"], (n,), "initial.value", f" (atom {i})")
                           for i, a in enumerate(atoms)]).reshape(len(atoms), n)
        probs = np.array([float(a["prob"]) for a in atoms])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"initial: malformed atoms ({exc})") from None

    noise_doc = doc.get("noise", {})
    noise = NoiseModel(kind=noise_doc.get("kind", "rademacher"), seed=int(noise_doc.get("seed", 0)))
    info = doc.get("info", {}).get("kind", "predictable")
    return ProblemData(
        Dimensions(n, m, l, N),
        Dynamics(**dyn),
        CostData(**cost, **terminal),
        InitialDistribution(values=values, probs=probs),
        noise,
        info,
    )


def validate(p: ProblemData) -> list[str]:
    """List every violated invariant; an empty list means the instance is valid."""
    out: list[str] = []
    n, m, l, N = p.n, p.m, p.l, p.N
    if n < 1:
        out.append(f"dims.n: must be positive, got {n}")
    if m < 1:
        out.append(f"dims.m: must be positive, got {m}")
    if l < 0:
        out.append(f"dims.l: must be >= 0, got {l}")
    if N <= l:
        out.append(f"dims: empty horizon (N={N}, l={l})")
    if out:
        return out
    T = N - l
    shapes = _shapes(n, m)
    for group, keys in ((p.dynamics, DYNAMICS_KEYS), (p.cost, COST_KEYS)):
        for key in keys:
            arr = getattr(group, key)
            if arr.shape != (T,) + shapes[key]:
                out.append(f"{key}: expected shape {(T,) + shapes[key]}, got {arr.shape}")
                continue
            for t in range(T):
                if not np.all(np.isfinite(arr[t])):
                    out.append(f"{key} at k={l + t}: non-finite entries")
                if key in SYMMETRIC_KEYS:
                    asym = asymmetry(arr[t])
                    if asym > SYM_TOL:
                        out.append(f"{key} at k={l + t}: not symmetric (relative asymmetry {asym:.3g})")
    for key in TERMINAL_KEYS:
        arr = getattr(p.cost, key)
        if arr.shape != shapes[key]:
            out.append(f"{key}: expected shape {shapes[key]}, got {arr.shape}")
            continue
        if not np.all(np.isfinite(arr)):
            out.append(f"{key}: non-finite entries")
        if key in SYMMETRIC_KEYS:
            asym = asymmetry(arr)
            if asym > SYM_TOL:
                out.append(f"{key}: not symmetric (relative asymmetry {asym:.3g})")
    init = p.initial
    if init.values.ndim != 2 or init.values.shape[0] < 1:
        out.append("initial: at least one atom required")
    elif init.values.shape[1] != n:
        out.append(f"initial.value: expected length {n}, got {init.values.shape[1]}")
    if init.probs.shape != (init.values.shape[0],):
        out.append("initial: one probability per atom required")
    else:
        for i, pr in enumerate(init.probs):
            if not (0.0 < pr <= 1.0):
                out.append(f"initial atom {i}: probability {pr:.12g} outside (0, 1]")
        total = float(np.sum(init.probs))
        if abs(total - 1.0) > 1e-12:
            out.append(f"initial: atom probabilities sum {total:.12g}")
    if p.noise.kind not in ("rademacher", "gaussian"):
        out.append(f"noise.kind: unknown kind {p.noise.kind!r}")
    if not (0 <= int(p.noise.seed) < 2**64):
        out.append(f"noise.seed: must be an unsigned 64-bit integer, got {p.noise.seed}")
    if p.info not in ("predictable", "adapted"):
        out.append(f"info.kind: unknown kind {p.info!r}")
    return out


def _symmetrized(p: ProblemData) -> ProblemData:
    cost = p.cost
    sym = {}
    for key in SYMMETRIC_KEYS:
        arr = getattr(cost, key)
        sym[key] = 0.5 * (arr + np.swapaxes(arr, -1, -2))
    return replace(p, cost=replace(cost, **sym))


def check(p: ProblemData) -> ProblemData:
    """Validate and return a symmetrized copy, raising on the first kind of failure."""
    diags = validate(p)
    if diags:
        sym = [d for d in diags if "not symmetric" in d]
        shape = [d for d in diags if "expected shape" in d or "expected length" in d]
        if sym:
            raise SymmetryError("; ".join(sym))
        if shape:
            raise ShapeError("; ".join(shape))
        raise ProblemError("; ".join(diags))
    return _symmetrized(p)


def loads_problem(text: str) -> ProblemData:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return check(problem_from_dict(doc))


def load_problem(path) -> ProblemData:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"file not found: {path}") from None
    return loads_problem(text)


def dumps_problem(p: ProblemData) -> str:
    return jsonio.dumps(p.to_dict(), indent=2) + "\n"


def save_problem(p: ProblemData, path) -> None:
    Path(path).write_text(dumps_problem(p), encoding="utf-8")



FIXTURES = ("ex71", "ex72", "ex51", "zero", "divergent", "irregular")


def fixture_path(name: str):
    """Path of a bundled problem file, e.g. ``fixture_path("ex71")``."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return Path(__file__).with_name("fixtures") / f"{name}.json"


def load_fixture(name: str) -> ProblemData:
    return load_problem(fixture_path(name))
