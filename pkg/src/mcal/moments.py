"""P1 hat moment functions, target moments and pool moment matrices."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as la

from .fem1d import assemble_weighted_mass

__all__ = [
    "MomentFamily",
    "MomentData",
    "target_moments",
    "pool_moment_matrices",
    "rowspace_basis",
    "SVD_RTOL",
]

SVD_RTOL = 1e-11


class MomentFamily:
    """Nodal P1 hats on ``M`` equispaced nodes of [-L, L], endpoints included.

    The hats sum to one on the whole interval, so the constant function lies
    in their span.
    """

    def __init__(self, M, L):
        M = int(M)
        if M < 2:
            raise ValueError(f"need at least two moment functions, got M={M}")
        self.M = M
        self.L = float(L)
        self.nodes = np.linspace(-self.L, self.L, M)

    def __repr__(self):
        return f"MomentFamily(M={self.M}, L={self.L})"

    @property
    def spacing(self):
        return 2.0 * self.L / (self.M - 1)

    def values(self, x):
        """Hat values, shape ``x.shape + (M,)``."""
        x = np.asarray(x, dtype=float)
        d = np.abs(x[..., None] - self.nodes) / self.spacing
        return np.clip(1.0 - d, 0.0, None)

    def hat(self, m):
        return lambda x: self.values(x)[..., m]

    def potential(self, coeffs):
        """Callable ``v(x) = sum_m coeffs[m] phi_m(x)``."""
        c = np.asarray(coeffs, dtype=float).copy()
        return lambda x: np.interp(x, self.nodes, c)

    def interpolate(self, f):
        """Coefficients of the hat interpolant of ``f``."""
        return np.asarray(f(self.nodes), dtype=float)

    def is_nested_in(self, other):
        """True when every hat of ``self`` is a combination of hats of ``other``."""
        if not np.isclose(self.L, other.L) or (other.M - 1) % (self.M - 1):
            return False
        return True

    @lru_cache(maxsize=8)
    def weighted_masses(self, mesh):
        """Weighted mass band of every hat on ``mesh``: arrays ``(M, n1)`` and ``(M, n1-1)``.

        Elements are split at the hat nodes, so the integrals are exact.
        """
        d = np.empty((self.M, mesh.n1))
        o = np.empty((self.M, mesh.n1 - 1))
        for m in range(self.M):
            V = assemble_weighted_mass(mesh, self.hat(m), breakpoints=self.nodes)
            d[m], o[m] = V.diag, V.off
        return d, o


def target_moments(family, rho):
    """Moments ``int phi_m rho`` of a piecewise quadratic density (exact)."""
    return rho.integrate_against(family.values, breakpoints=family.nodes)


def pool_moment_matrices(family, bands, mesh):
    """Moment matrices ``A[m, k, l] = int phi_m rho_kl`` from transition bands.

    ``bands`` is the ``(diag, off)`` pair returned by
    :func:`mcal.pair_space.transition_bands`.
    """
    diag, off = bands
    Vd, Vo = family.weighted_masses(mesh)
    A = np.einsum("klp,mp->mkl", diag, Vd, optimize=True)
    A += 2.0 * np.einsum("klp,mp->mkl", off, Vo, optimize=True)
    return 0.5 * (A + A.transpose(0, 2, 1))


def rowspace_basis(A, rtol=SVD_RTOL):
    """Orthonormal basis of the orthogonal complement of ``{c : sum_m c_m A_m = 0}``.

    Parameters
    ----------
    A : ndarray, shape (M, K, K)
    rtol : float
        Singular values below ``rtol * sigma_max`` count as zero.

    Returns
    -------
    Q : ndarray, shape (M, r)
    degenerate : bool
        True when the map is zero (``r == 0``).
    """
    A = np.asarray(A, dtype=float)
    M = A.shape[0]
    mat = A.reshape(M, -1)
    U, s, _ = la.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M, 0)), True
    r = int(np.sum(s > rtol * s[0]))
    return U[:, :r], r == 0


@dataclass
class MomentData:
    """Target moments with the moment matrices of the current pool."""

    b: np.ndarray
    A: np.ndarray
    rtol: float = SVD_RTOL

    def __post_init__(self):
        self.rowspace, self.degenerate = rowspace_basis(self.A, self.rtol)

    @property
    def rank(self):
        return self.rowspace.shape[1]

    def reduced(self):
        """Constraint matrices and right-hand side expressed in rowspace coordinates."""
        Q = self.rowspace
        return np.einsum("mj,mkl->jkl", Q, self.A), Q.T @ self.b

    def outside_residual(self):
        """Part of ``b`` orthogonal to the rowspace; nonzero means the pool cannot match."""
        Q = self.rowspace
        return float(np.linalg.norm(self.b - Q @ (Q.T @ self.b)))
