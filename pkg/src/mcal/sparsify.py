"""Sparse representations of density matrices.

Two reductions are provided: the spectral one (diagonalize the weight
matrix of an orthonormal pool and keep the occupied directions) and a
Caratheodory elimination that shrinks a discrete measure to at most as many
atoms as there are moments while keeping every moment unchanged.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = ["SparseState", "spectral_sparsify", "caratheodory_reduce", "DROP_RTOL"]

DROP_RTOL = 1e-10


@dataclass
class SparseState:
    """``Gamma = sum_k weights[k] |states[:, k]><states[:, k]|`` with descending weights."""

    weights: np.ndarray
    states: np.ndarray

    @property
    def K(self):
        return self.weights.shape[0]

    @property
    def trace(self):
        return float(self.weights.sum())

    def subset(self, idx, weights=None):
        idx = np.asarray(idx, dtype=int)
        w = self.weights[idx] if weights is None else np.asarray(weights, dtype=float)
        order = np.argsort(-w, kind="stable")
        return SparseState(w[order], self.states[:, idx[order]])


def spectral_sparsify(S, pool, drop_tol=None):
    """Rotate an orthonormal pool onto the eigenvectors of its weight matrix.

    Parameters
    ----------
    S : ndarray, shape (K, K)
        Symmetric positive semidefinite weight matrix on the pool.
    pool : ndarray, shape (n, K)
        G-orthonormal pool columns.
    drop_tol : float, optional
        Eigenvalues at or below this are discarded. Defaults to
        ``1e-10 * lambda_max``.

    Raises
    ------
    ValueError
        If ``S`` has an eigenvalue below ``-10 * drop_tol``.
    """
    S = np.asarray(S, dtype=float)
    pool = np.asarray(pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    if S.shape != (pool.shape[1], pool.shape[1]):
        raise ValueError(f"weight matrix {S.shape} does not match pool of size {pool.shape[1]}")
    lam, U = la.eigh(0.5 * (S + S.T))
    lam, U = lam[::-1], U[:, ::-1]
    if drop_tol is None:
        drop_tol = DROP_RTOL * max(lam[0], 0.0)
    if lam[-1] < -10.0 * drop_tol:
        raise ValueError(f"weight matrix is not positive semidefinite (eigenvalue {lam[-1]:.3e})")
    keep = lam > drop_tol
    return SparseState(lam[keep].copy(), pool @ U[:, keep])


def caratheodory_reduce(weights, moment_vectors):
    """Reduce a positive discrete measure to at most ``J0`` atoms with equal moments.

    Parameters
    ----------
    weights : array_like, shape (n,)
        Positive atom weights.
    moment_vectors : array_like, shape (n, J0)
        Moment vector of each atom.

    Returns
    -------
    indices : ndarray of int
        Surviving atoms, in increasing order.
    new_weights : ndarray
        Their weights; ``new_weights @ moment_vectors[indices]`` equals
        ``weights @ moment_vectors``.

    Notes
    -----
    Each pass takes a null combination ``z`` of the current moment vectors
    (last right singular vector) and moves the weights along ``-z`` or
    ``+z`` until a weight reaches zero; the sign that empties more atoms at
    once wins, then the one hitting the smallest index. Inputs with at most
    ``J0`` atoms are returned unchanged.
    """
    w = np.asarray(weights, dtype=float).copy()
    V = np.asarray(moment_vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if w.ndim != 1 or w.size == 0 or V.shape[0] != w.size:
        raise ValueError("need one moment vector per weight and at least one atom")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    J0 = V.shape[1]
    alive = np.arange(w.size)
    scale = np.abs(w).max()
    while alive.size > J0:
        z = la.svd(V[alive].T, full_matrices=True)[2][-1]
        wa = w[alive]
        best = None
        for cand in (z, -z):
            pos = cand > 1e-14 * np.abs(cand).max()
            if not pos.any():
                continue
            ratios = np.full(alive.size, np.inf)
            ratios[pos] = wa[pos] / cand[pos]
            t = ratios.min()
            hits = np.flatnonzero(ratios <= t * (1.0 + 1e-12))
            key = (-hits.size, hits[0])
            if best is None or key < best[0]:
                best = (key, cand, t, hits)
        _, cand, t, hits = best
        w[alive] = wa - t * cand
        w[alive[hits]] = 0.0
        alive = alive[w[alive] > 1e-15 * scale]
    return alive, w[alive]
