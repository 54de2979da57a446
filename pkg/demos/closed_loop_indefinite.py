"""
Closed-loop control with a negative control weight
==================================================

The scalar problem in the bundled ``ex71`` file penalizes control with
R = -1, yet the cost is uniformly convex.  We solve the Riccati recursion,
read off the feedback gains and check the value three ways.
"""

import numpy as np

from mflq import classify, closed_loop_cost, oracle, simulate, solve_gre, synthesize_closed_loop
from mflq.problem import InitialDistribution, load_fixture

p = load_fixture("ex71")
sol = solve_gre(p)
verdict = classify(sol)
print("P  =", sol.P[:, 0, 0])
print("Pi =", sol.Pi[:, 0, 0])
print("verdict:", verdict.kind, "with margin", verdict.alpha)

# The optimal feedback is u = Theta (x - Ex) + Thetabar Ex + v.
strat, value = synthesize_closed_loop(p)
print("Theta    =", strat.Theta[:, 0, 0])
print("Thetabar =", strat.Thetabar[:, 0, 0])

# Initial state +1 or -1 with equal odds: only the P part of the value survives.
print("value from the recursion:", value.value)
print("exact tree optimum:      ", oracle.solve_exact(p).value)
print("moment evaluation:       ", closed_loop_cost(p, strat))
est = simulate(p, strat, 100_000, seed=1)
print(f"Monte Carlo:              {est.mean:.6f} +- {est.stderr:.6f}")

# With a deterministic start the mean-field part Pi takes over.
p1 = p.with_initial(InitialDistribution.deterministic([1.0]))
print("deterministic start:", synthesize_closed_loop(p1)[1].value, "vs Pi_0 =", sol.Pi[0, 0, 0])

# The cost is uniformly convex: the smallest eigenvalue of its Hessian is positive.
print("min eigenvalue of the Hessian:", oracle.assemble_quadratic(p).min_eig)
assert np.isclose(value.value, oracle.solve_exact(p).value)
