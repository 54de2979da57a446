"""Finite-horizon mean-field stochastic LQ control with indefinite weights."""

__version__ = "0.1.0"

from .affine import AffineSolution, solve_lre
from .matnum import pinv, psd_check, range_included
from .moments import MomentState, closed_loop_cost, propagate, simulate
from .oracle import (
    NoiseTree,
    QuadraticModel,
    TreeProcess,
    assemble_quadratic,
    exact_cost,
    fbsde_backward,
    rollout,
    solve_exact,
    stationarity_residual,
)
from .problem import (
    InitialDistribution,
    ProblemData,
    build_problem,
    load_problem,
    save_problem,
    validate,
)
from .riccati import (
    RiccatiSolution,
    classify,
    kleinman_iterate,
    solve_gre,
    solve_gre_eps,
    solve_lyapunov,
)
from .strategy import (
    ClosedLoopStrategy,
    detect_open_loop,
    finiteness_scan,
    minimizing_sequence,
    solvability,
    synthesize_closed_loop,
    value_at,
)
