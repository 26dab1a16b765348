"""
The moment-constrained functional by column generation
======================================================

Two soft-Coulomb fermions on (-10, 10). The density is only prescribed
through M hat-function moments. Each iteration solves a dual SDP on the
current pool for a potential v, adds the lowest eigenvectors of H - v,
and solves the primal SDP on the enlarged pool. b.y + E(v) is a certified
lower bound, the primal value an upper bound.
"""

import numpy as np

from mcal.driver import McalConfig, run

config = McalConfig(L=10.0, D=60, M=10, q_vec=4)
report = run(config)

print(" n   F_n            Ftilde_n       E(v_n)      K")
for n, F, Ft, E, K, gap, lower in report.history:
    print(f"{n:2d}  {F:.10f}  {Ft:.10f}  {E: .2e}  {K}")

print(f"\n{report.status}: [{report.lower:.10f}, {report.Ftilde:.10f}]")
print("final state has", report.state.K, "component(s)")

# %%
# The minimizing density reproduces the moments of the target, not the
# target itself.

problem = report.problem
print("max moment residual", report.moment_residuals.max())
x = np.linspace(-10, 10, 9)
print("x        ", np.round(x, 2))
print("target   ", np.round(problem.target(x), 4))
print("minimizer", np.round(report.rho_gamma(x), 4))
print("potential", np.round(problem.family.potential(report.y)(x), 4))
