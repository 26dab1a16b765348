"""
A small semidefinite program
============================

minimize <C, X>  subject to  <A_j, X> = b_j,  X >= 0.

The solver is a primal-dual interior point method; its dual gives the
certificate (y, S) with S = C - sum_j y_j A_j.
"""

import tempfile
from pathlib import Path

import numpy as np

from mcal import sdp

rng = np.random.default_rng(1)
B = rng.standard_normal((5, 5))
C = B + B.T

# trace one: the optimum is the smallest eigenvalue of C
sol = sdp.solve(sdp.SdpProblem(C, np.eye(5)[None], [1.0]))
print(sol.status, sol.primal_value, np.linalg.eigvalsh(C)[0])
print("rank of X:", np.linalg.matrix_rank(sol.X, tol=1e-6))

# %%
# A second constraint fixes one diagonal entry.

A = np.array([np.eye(5), np.diag([1.0, 0, 0, 0, 0])])
sol = sdp.solve(sdp.SdpProblem(C, A, [1.0, 0.3]))
print(sol.status, "value", sol.primal_value, "gap", sol.gap)
print("X[0,0] =", sol.X[0, 0], " min eig S =", sdp.min_eig_sym(sol.S))

# %%
# Problems can be stored in a plain-text format and solved with
# ``mcal sdp FILE``.

path = Path(tempfile.mkdtemp()) / "problem.txt"
sdp.write_problem(path, sdp.SdpProblem(C, A, [1.0, 0.3]))
print(path.read_text().splitlines()[0], "...")
print(sdp.solve(sdp.read_problem(path)).primal_value)
