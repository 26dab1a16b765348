"""Lowest generalized eigenpairs ``H psi = lambda G psi`` on the wedge space."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

__all__ = [
    "EigResult",
    "EigenError",
    "smallest_eigpairs",
    "TensorPreconditioner",
    "DENSE_THRESHOLD",
]

log = logging.getLogger(__name__)

DENSE_THRESHOLD = 1500


class EigenError(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str
    iterations: int = 0
    info: dict = field(default_factory=dict)


class TensorPreconditioner(spla.LinearOperator):
    """Exact inverse of the one-body part of a two-body operator, plus a shift.

    The one-body operator is ``h = K / 2 - V`` (``V`` an optional weighted
    mass matrix of a potential). With ``h U = M U diag(mu)`` and
    ``U^T M U = I`` the two-body operator ``h x M + M x h + shift M x M`` is
    diagonal in the basis ``U x U``. It commutes with particle exchange, so
    its inverse maps antisymmetric coefficients to antisymmetric
    coefficients. The interaction is left out.

    Parameters
    ----------
    space : PairSpace
    shift : float, optional
        Added to every pair energy ``mu_i + mu_j``. Defaults to
        ``1 - (mu_0 + mu_1)`` so that the smallest pair sits at 1.
    vmass : TriDiagSym, optional
        Weighted mass matrix of the one-body potential ``v``.
    """

    def __init__(self, space, shift=None, vmass=None):
        h = 0.5 * space.stiffness.to_dense()
        if vmass is not None:
            h = h - vmass.to_dense()
        mu, U = la.eigh(h, space.mass.to_dense())
        if shift is None:
            shift = 1.0 - (mu[0] + mu[1])
        self.U = U
        self.denom = mu[:, None] + mu[None, :] + shift
        # diagonal pairs do not occur in the wedge space
        np.fill_diagonal(self.denom, 1.0)
        if np.any(self.denom <= 0):
            raise ValueError("shift makes the tensor preconditioner indefinite")
        self.basis = space.basis
        n2 = space.n2
        super().__init__(dtype=float, shape=(n2, n2))

    def _apply(self, r):
        R = self.basis.to_matrix(r)
        U = self.U
        Z = U.T @ R @ U
        Z = Z / self.denom
        Z = U @ Z @ U.T
        return self.basis.from_matrix(Z)

    def _matvec(self, x):
        return self._apply(np.ravel(x))

    def _matmat(self, X):
        return self._apply(np.asarray(X)).T


def _residuals(H, G, vals, vecs):
    R = H @ vecs - (G @ vecs) * vals
    gn = np.sqrt(np.einsum("ik,ik->k", vecs, G @ vecs))
    return np.linalg.norm(R, axis=0) / gn


def _g_normalize(G, vecs):
    gn = np.sqrt(np.einsum("ik,ik->k", vecs, G @ vecs))
    return vecs / gn


def _dense(H, G, q):
    Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    Gd = G.toarray() if hasattr(G, "toarray") else np.asarray(G)
    try:
        la.cholesky(Gd)
    except la.LinAlgError as exc:
        raise EigenError("Gram form is not positive definite") from exc
    vals, vecs = la.eigh(Hd, Gd, subset_by_index=[0, q - 1])
    return vals, vecs


def smallest_eigpairs(H, G, q=1, tol=1e-8, *, precond=None, dense_threshold=DENSE_THRESHOLD,
                      seed=0, maxiter=400, guess=None, extra=4):
    """The ``q`` smallest eigenpairs of the pencil ``(H, G)``.

    Dense LAPACK is used up to ``dense_threshold`` unknowns; above it, a
    block LOBPCG iteration with ``precond`` (typically a
    :class:`TensorPreconditioner`). Eigenvectors come back G-orthonormal.

    Parameters
    ----------
    H, G : sparse matrices
    q : int
    tol : float
        Bound on ``||H psi - lambda G psi|| / ||psi||_G``, relative to
        ``max(1, |lambda|)``, for each pair.
    precond : LinearOperator, optional
    seed : int
        Seed of the random starting block of the iterative path.
    guess : ndarray, optional
        Columns added to the starting block (e.g. previous eigenvectors).
    extra : int
        Additional block vectors carried by LOBPCG to speed up convergence.
    """
    n = H.shape[0]
    if q < 1 or q >= n:
        raise ValueError(f"need 1 <= q < {n}, got q={q}")

    if n <= dense_threshold:
        vals, vecs = _dense(H, G, q)
        res = _residuals(H, G, vals, vecs)
        return EigResult(vals, vecs, res, "dense")

    m = min(q + extra, n // 2)
    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal((n, m))
    if guess is not None:
        guess = np.atleast_2d(np.asarray(guess, dtype=float).T).T
        k = min(guess.shape[1], m)
        X0[:, :k] = guess[:, :k]
    try:
        # convergence is judged below on our own residuals
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            vals, vecs = spla.lobpcg(H, X0, B=G, M=precond, tol=tol, maxiter=maxiter,
                                     largest=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenError(f"LOBPCG failed: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # Rayleigh-Ritz in the returned block for clean G-orthonormality
    Hs = vecs.T @ (H @ vecs)
    Gs = vecs.T @ (G @ vecs)
    try:
        vals, Y = la.eigh(0.5 * (Hs + Hs.T), 0.5 * (Gs + Gs.T))
    except la.LinAlgError as exc:
        raise EigenError("returned block is not G-independent") from exc
    vecs = _g_normalize(G, vecs @ Y)
    vals, vecs = vals[:q], vecs[:, :q]
    res = _residuals(H, G, vals, vecs)
    if np.any(res > tol * np.maximum(1.0, np.abs(vals))):
        raise EigenError(f"LOBPCG did not converge: residuals {res}", residuals=res)
    return EigResult(vals, vecs, res, "lobpcg")
