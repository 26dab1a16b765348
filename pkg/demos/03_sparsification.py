"""
Sparse density matrices
=======================

A mixed state on an orthonormal pool is diagonalized and only occupied
directions are kept. A Caratheodory step then removes atoms of a discrete
measure without touching its moments.
"""

import numpy as np

from mcal.sparsify import caratheodory_reduce, spectral_sparsify

rng = np.random.default_rng(0)
pool = np.linalg.qr(rng.standard_normal((40, 6)))[0]
B = rng.standard_normal((6, 2))
S = B @ B.T  # rank two weight matrix
state = spectral_sparsify(S, pool)
print("kept", state.K, "states with weights", state.weights)

# %%
# 30 atoms with 5 moments each: at most 5 atoms survive.

w = rng.uniform(0.1, 1.0, 30)
V = np.column_stack([np.ones(30), rng.standard_normal((30, 4))])
idx, w2 = caratheodory_reduce(w, V)
print("atoms", idx, "weights", np.round(w2, 4))
print("moment change", np.abs(w2 @ V[idx] - w @ V).max())
