"""
Policy iteration versus the direct recursion
============================================

On a convex instance, alternating gain improvement and cost evaluation
converges to the Riccati solution, and every iterate is below the previous
one in the semidefinite order.
"""

import numpy as np

from mflq import build_problem, kleinman_iterate, solve_gre

rng = np.random.default_rng(3)
n, m, N = 2, 2, 5
Q = rng.standard_normal((n, n))
p = build_problem(
    n, m, N,
    A=0.8 * rng.standard_normal((n, n)), Abar=0.3 * np.eye(n),
    B=rng.standard_normal((n, m)), C=0.4 * rng.standard_normal((n, n)),
    D=0.5 * rng.standard_normal((n, m)),
    Q=Q @ Q.T, R=np.eye(m), Rbar=0.5 * np.eye(m), G=np.eye(n),
)

sol = kleinman_iterate(p)
ref = solve_gre(p)
for i, (P, _) in enumerate(sol.iterations):
    print(f"iterate {i}: trace P_0 = {np.trace(P[0]):.12f}")
print("direct recursion:  trace P_0 =", np.trace(ref.P[0]))
print("max difference:", np.abs(sol.P - ref.P).max())
