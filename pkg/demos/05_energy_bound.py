"""
Ground energies of interpolated potentials
==========================================

Replacing v by its hat interpolant changes the two-particle ground energy
by at most twice the sup-norm error, since the density integrates to two.
"""

import numpy as np

from mcal.driver import McalConfig, McalProblem, ground_energy
from mcal.moments import MomentFamily

L = 10.0


def v(x):
    return np.cos(np.pi * x / L) * np.exp(-x * x / 25)


problem = McalProblem(McalConfig(L=L, D=60, M=10))
E = ground_energy(v, problem)
x = np.linspace(-L, L, 100001)
print(f"E[v] = {E:.8f}")
for M in (5, 10, 20, 40, 80):
    fam = MomentFamily(M, L)
    vphi = fam.potential(fam.interpolate(v))
    Ephi = ground_energy(vphi, problem, breakpoints=fam.nodes)
    sup = np.abs(v(x) - vphi(x)).max()
    print(f"M={M:3d}  |E - E_phi| = {abs(E - Ephi):.2e}  <=  2 sup|v - v_phi| = {2 * sup:.2e}")
