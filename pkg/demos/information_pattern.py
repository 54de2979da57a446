"""
Why the information pattern matters
===================================

The ``ex51`` problem (x+ = u + x w, cost u^2 summed minus the terminal x^2)
has value -xi^2 when the control at time k cannot see the noise w_k.  Let the
control see w_k and u_k = lam w_k gives cost -2 lam xi - xi^2, which is
unbounded below in lam.
"""

from mflq import finiteness_scan, oracle, synthesize_closed_loop
from mflq.problem import load_fixture

adapted = load_fixture("ex51")
predictable = adapted.with_info("predictable")

for lam in (-1.0, 0.0, 5.0, 50.0):
    u = oracle.control_from(adapted, lambda k, xi, noises: lam * noises[-1])
    print(f"lam={lam:6.1f}: cost {oracle.exact_cost(adapted, u):9.3f}")

print("adapted:     ", finiteness_scan(adapted).verdict,
      "| Hessian min eigenvalue", oracle.assemble_quadratic(oracle.homogeneous_zero_start(adapted)).min_eig)
print("predictable: ", finiteness_scan(predictable).verdict,
      "| value", synthesize_closed_loop(predictable)[1].value)
