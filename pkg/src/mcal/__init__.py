"""Moment-constrained Lieb functional for two fermions on an interval.

Submodules:

- ``fem1d``: P1 finite elements on (-L, L) with Dirichlet conditions
- ``pair_space``: antisymmetric two-particle space and its operators
- ``moments``: hat moment functions and row-space reduction
- ``sdp``: primal-dual interior-point solver for small dense SDPs
- ``eigen``: lowest eigenpairs of the two-particle Hamiltonian
- ``sparsify``: spectral and Caratheodory reduction of density matrices
- ``driver``: the column-generation iteration
- ``cli``: the ``mcal`` command

The package namespace stays light so that ``mcal --threads`` can act before
numpy is imported; import from the submodules.
"""

__version__ = "0.1.0"
