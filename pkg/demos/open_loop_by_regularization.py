"""
Finding an open-loop optimum by regularization
==============================================

In the ``ex72`` problem the mean-field control weight is singular, so the
Riccati solution is regular but not strongly regular.  Adding eps to R and
letting eps shrink produces a minimizing sequence whose limit is optimal.
"""

import numpy as np

from mflq import detect_open_loop, finiteness_scan, oracle, solve_gre, solve_gre_eps
from mflq.problem import load_fixture
from mflq.strategy import default_schedule

p = load_fixture("ex72")
sol = solve_gre(p)
print("P  =", sol.P[:, 0, 0], " Pi =", sol.Pi[:, 0, 0])
print("Upsbar_0 =\n", sol.Upsbar[0])

# The eps-regularized recursion converges to the same pair.
for eps in (1.0, 1e-3, 2.0**-40):
    s = solve_gre_eps(p, eps)
    print(f"eps={eps:.3g}: P_0={s.P[0, 0, 0]:.12f}  Pi_0={s.Pi[0, 0, 0]:.12f}")

fin = finiteness_scan(p, default_schedule())
print("finiteness:", fin.verdict, "-", fin.reason)

# Follow u^eps down the schedule and compare its limit with the exact optimum.
ol = detect_open_loop(p, finiteness=fin)
exact = oracle.solve_exact(p)
print("open loop:", ol.verdict, "| cost of the limit:", ol.costs[-1], "| exact value:", exact.value)
print("distance to the exact minimizer:", (ol.control - exact.control).norm())
print("limit control at k=0:", ol.control.values[0][0])
assert np.isclose(ol.costs[-1], 3.0)
