"""Antisymmetric two-particle Galerkin space built from interior P1 hats.

A wavefunction is stored through its coefficients on the wedge basis
``phi_i ^ phi_j`` (i < j), with

    phi_i ^ phi_j (x, y) = (phi_i(x) phi_j(y) - phi_j(x) phi_i(y)) / sqrt(2).

Two-body operators are assembled on the full tensor space (row-major
``(p, q) -> p * n1 + q``) and restricted with the isometry ``P`` whose column
for (i < j) holds ``+-1/sqrt(2)`` at (i, j) and (j, i). Every operator that
commutes with particle exchange satisfies ``wedge_form = P.T @ full @ P``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fem1d import PiecewiseQuadratic, assemble_mass, assemble_stiffness

__all__ = [
    "PairBasis",
    "PairSpace",
    "assemble_pair_gram",
    "assemble_pair_kinetic",
    "assemble_pair_onebody",
    "assemble_interaction",
    "pair_density",
    "transition_bands",
    "gram_orthonormalize",
    "extend_orthonormal",
    "slater",
    "softcore",
    "GRAM_CUTOFF",
]

GRAM_CUTOFF = 1e-10
_SQRT1_2 = np.sqrt(0.5)


class PairBasis:
    """Index bookkeeping for the wedge basis of an ``n1``-dimensional one-body space."""

    def __init__(self, n1):
        if n1 < 2:
            raise ValueError("wedge space needs at least two one-body functions")
        self.n1 = int(n1)
        self.I, self.J = np.triu_indices(self.n1, 1)
        self.n2 = self.I.size
        lin = -np.ones((self.n1, self.n1), dtype=np.int64)
        lin[self.I, self.J] = np.arange(self.n2)
        self._lin = lin

    def index(self, i, j):
        """Linear index of the pair (i, j); the order of i, j is irrelevant."""
        i, j = min(i, j), max(i, j)
        k = self._lin[i, j]
        if k < 0:
            raise IndexError(f"({i}, {j}) is not a wedge pair")
        return int(k)

    def pair(self, k):
        return int(self.I[k]), int(self.J[k])

    @cached_property
    def projector(self):
        """Sparse isometry from wedge coefficients to full tensor coefficients."""
        n1, n2 = self.n1, self.n2
        rows = np.concatenate([self.I * n1 + self.J, self.J * n1 + self.I])
        cols = np.concatenate([np.arange(n2), np.arange(n2)])
        vals = np.concatenate([np.full(n2, _SQRT1_2), np.full(n2, -_SQRT1_2)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n1 * n1, n2))

    def to_matrix(self, c):
        """Antisymmetric full coefficient matrix (or stack, for a pool ``(n2, K)``)."""
        c = np.asarray(c, dtype=float)
        if c.ndim == 1:
            out = np.zeros((self.n1, self.n1))
            out[self.I, self.J] = c * _SQRT1_2
            return out - out.T
        out = np.zeros((c.shape[1], self.n1, self.n1))
        out[:, self.I, self.J] = c.T * _SQRT1_2
        return out - out.transpose(0, 2, 1)

    def from_matrix(self, C):
        """Wedge coefficients of the antisymmetric part of ``C``."""
        C = np.asarray(C, dtype=float)
        return (C[..., self.I, self.J] - C[..., self.J, self.I]) * _SQRT1_2

    def restrict(self, full):
        P = self.projector
        out = (P.T @ full @ P).tocsr()
        # exact symmetry by storage
        return ((out + out.T) * 0.5).tocsr()


def _kron(A, B):
    return sp.kron(A.to_sparse(), B.to_sparse(), format="csr")


def assemble_pair_gram(mass, basis=None):
    """Gram form ``G[(ij),(kl)] = M_ik M_jl - M_il M_jk``."""
    basis = basis or PairBasis(mass.n)
    return basis.restrict(_kron(mass, mass))


def assemble_pair_kinetic(stiffness, mass, basis=None):
    """Two-particle kinetic form of ``-1/2 (Laplacian_x + Laplacian_y)``."""
    basis = basis or PairBasis(mass.n)
    return basis.restrict(0.5 * (_kron(stiffness, mass) + _kron(mass, stiffness)))


def assemble_pair_onebody(vmass, mass, basis=None):
    """Form of ``v(x) + v(y)`` given the weighted mass matrix of ``v``."""
    basis = basis or PairBasis(mass.n)
    return basis.restrict(_kron(vmass, mass) + _kron(mass, vmass))


def softcore(eps):
    if not eps > 0:
        raise ValueError(f"softcore width must be positive, got {eps}")
    return lambda r: 1.0 / np.sqrt(r * r + eps * eps)


def _coulomb(r):
    return 1.0 / np.abs(r)


def _tensor_rule(n, nsub=1):
    """Composite Gauss rule on [0, 1] with ``nsub`` equal cells."""
    t, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(0.0, 1.0, nsub + 1)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (a + b) + 0.5 * (b - a) * t).ravel()
    wx = (0.5 * (b - a) * w).ravel()
    return x, wx


def _graded_rule(offset, levels=4, n=4):
    """Quadrature on the reference square [0,1]^2 refined toward the line s - t = offset.

    Cells touching the line are split dyadically ``levels`` times; touching
    leaves use a 4x5 Gauss product so no node lies on the line.
    """
    s4, w4 = np.polynomial.legendre.leggauss(n)
    s5, w5 = np.polynomial.legendre.leggauss(n + 1)
    S, T, W = [], [], []

    def emit(s0, s1, t0, t1, xs, xw, ys, yw):
        hs, ht = 0.5 * (s1 - s0), 0.5 * (t1 - t0)
        ss = s0 + hs * (xs + 1.0)
        tt = t0 + ht * (ys + 1.0)
        S.append(np.repeat(ss, tt.size))
        T.append(np.tile(tt, ss.size))
        W.append(np.outer(hs * xw, ht * yw).ravel())

    def touches(s0, s1, t0, t1):
        return s0 - t1 <= offset <= s1 - t0

    def rec(s0, s1, t0, t1, level):
        if not touches(s0, s1, t0, t1):
            emit(s0, s1, t0, t1, s4, w4, s4, w4)
        elif level == levels:
            emit(s0, s1, t0, t1, s4, w4, s5, w5)
        else:
            sm, tm = 0.5 * (s0 + s1), 0.5 * (t0 + t1)
            for a, b in ((s0, sm), (sm, s1)):
                for c, d in ((t0, tm), (tm, t1)):
                    rec(a, b, c, d, level + 1)

    rec(0.0, 1.0, 0.0, 1.0, 0)
    return np.concatenate(S), np.concatenate(T), np.concatenate(W)


def _local_tensors(mesh, w, ex, ey, s, t, wq):
    """Element-pair tensors ``L[k, a, c, b, d]`` for x in element ex[k], y in ey[k].

    ``s, t, wq`` is a reference rule on the unit square shared by all pairs.
    """
    h = mesh.h
    xq = mesh.nodes[ex][:, None] + h * s[None, :]
    yq = mesh.nodes[ey][:, None] + h * t[None, :]
    kw = w(xq - yq) * (h * h) * wq[None, :]
    if not np.all(np.isfinite(kw)):
        raise ValueError("interaction kernel evaluated to a non-finite value")
    px = np.stack([1.0 - s, s])  # (2, q)
    py = np.stack([1.0 - t, t])
    fx = px[:, None, :] * px[None, :, :]  # (a, c, q)
    fy = py[:, None, :] * py[None, :, :]
    return np.einsum("kq,acq,bdq->kacbd", kw, fx, fy, optimize=True)


def _scatter(mesh, ex, ey, loc, rows, cols, vals):
    n1 = mesh.n1
    o = np.array([0, 1])
    A = ex[:, None, None, None, None] + o[None, :, None, None, None]
    C = ex[:, None, None, None, None] + o[None, None, :, None, None]
    B = ey[:, None, None, None, None] + o[None, None, None, :, None]
    Dn = ey[:, None, None, None, None] + o[None, None, None, None, :]
    shape = loc.shape
    A, B, C, Dn = (np.broadcast_to(z, shape).ravel() for z in (A, B, C, Dn))
    v = loc.ravel()
    keep = (A >= 1) & (A <= n1) & (B >= 1) & (B <= n1) & (C >= 1) & (C <= n1) & (Dn >= 1) & (Dn <= n1)
    rows.append((A[keep] - 1) * n1 + (B[keep] - 1))
    cols.append((C[keep] - 1) * n1 + (Dn[keep] - 1))
    vals.append(v[keep])


def assemble_interaction(mesh, kernel="softcore", eps=1.0, basis=None, levels=4):
    """Bilinear form of the pair interaction ``w(x - y)`` on the wedge space.

    Parameters
    ----------
    mesh : Mesh1D
    kernel : {"softcore", "exact"} or callable
        ``"softcore"`` is ``1/sqrt(r^2 + eps^2)``; ``"exact"`` is ``1/|r|``,
        integrated with a rule graded toward the diagonal (the wedge
        functions vanish there, so the restricted form is finite). A
        callable ``w(r)`` is integrated with the regular rule.
    eps : float
        Softcore width.
    levels : int
        Dyadic refinement levels toward the diagonal for the exact kernel.
    """
    basis = basis or PairBasis(mesh.n1)
    D = mesh.D
    ex, ey = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()

    if kernel == "softcore":
        w = softcore(eps)
        nsub = max(1, int(np.ceil(2.0 * mesh.h / eps)))
        groups = [(np.ones(ex.size, bool), _product(_tensor_rule(4, nsub)))]
    elif kernel == "exact":
        w = _coulomb
        k = ex - ey
        # offset in reference coordinates: s - t = (ey - ex) for x = y
        groups = [(np.abs(k) > 1, _product(_tensor_rule(4)))]
        for off in (-1, 0, 1):
            groups.append((ey - ex == off, _graded_rule(off, levels)))
    elif callable(kernel):
        w = kernel
        groups = [(np.ones(ex.size, bool), _product(_tensor_rule(4)))]
    else:
        raise ValueError(f"unknown interaction kernel {kernel!r}")

    rows, cols, vals = [], [], []
    chunk = 4096
    for mask, (s, t, wq) in groups:
        gx, gy = ex[mask], ey[mask]
        for start in range(0, gx.size, chunk):
            sx, sy = gx[start:start + chunk], gy[start:start + chunk]
            loc = _local_tensors(mesh, w, sx, sy, s, t, wq)
            _scatter(mesh, sx, sy, loc, rows, cols, vals)
    n = mesh.n1 ** 2
    full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return basis.restrict(full)


def _product(rule1d):
    x, w = rule1d
    return np.repeat(x, x.size), np.tile(x, x.size), np.outer(w, w).ravel()


def slater(u, w, basis=None):
    """Wedge coefficients of ``u ^ w`` for one-body nodal vectors ``u``, ``w``."""
    basis = basis or PairBasis(len(u))
    return u[basis.I] * w[basis.J] - u[basis.J] * w[basis.I]


def transition_bands(pool, mass, basis=None):
    """Tridiagonal bands of the one-body transition matrices of a pool.

    For pool columns ``Psi_k`` the cross density is
    ``rho_kl(x) = 2 int Psi_k(x, y) Psi_l(x, y) dy = sum_pr g_pr phi_p(x) phi_r(x)``;
    only ``|p - r| <= 1`` contributes, so the band suffices.

    Returns
    -------
    diag : ndarray, shape (K, K, n1)
    off : ndarray, shape (K, K, n1 - 1)
    """
    pool = np.asarray(pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    basis = basis or PairBasis(mass.n)
    Ca = basis.to_matrix(pool)  # (K, n1, n1)
    CaM = Ca * mass.diag[None, None, :]
    CaM[:, :, :-1] += Ca[:, :, 1:] * mass.off[None, None, :]
    CaM[:, :, 1:] += Ca[:, :, :-1] * mass.off[None, None, :]
    diag = 2.0 * np.einsum("kpq,lpq->klp", CaM, Ca, optimize=True)
    up = np.einsum("kpq,lpq->klp", CaM[:, :-1], Ca[:, 1:], optimize=True)
    lo = np.einsum("kpq,lpq->klp", CaM[:, 1:], Ca[:, :-1], optimize=True)
    return diag, up + lo


def pair_density(psi_a, psi_b, mesh, basis=None):
    """Cross density ``2 int Psi_a(x, y) Psi_b(x, y) dy`` as an exact piecewise quadratic."""
    pool = np.column_stack([psi_a, psi_b])
    diag, off = transition_bands(pool, assemble_mass(mesh), basis)
    return PiecewiseQuadratic.from_band(mesh, diag[0, 1], off[0, 1])


def gram_orthonormalize(pool, G, cutoff=GRAM_CUTOFF):
    """G-orthonormal basis of the span of the pool columns.

    Directions with Gram eigenvalue below ``cutoff * largest`` are discarded.

    Returns
    -------
    basis : ndarray, shape (n2, rank)
    rank : int
    """
    pool = np.asarray(pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    gram = pool.T @ (G @ pool)
    gram = 0.5 * (gram + gram.T)
    lam, V = la.eigh(gram)
    if lam[-1] <= 0.0:
        raise ValueError("pool spans only the zero vector")
    keep = lam > cutoff * lam[-1]
    lam, V = lam[keep][::-1], V[:, keep][:, ::-1]
    # deterministic signs: largest component of each rotation positive
    sgn = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])])
    V = V * sgn
    basis = pool @ (V / np.sqrt(lam))
    return basis, int(keep.sum())


def extend_orthonormal(basis, new, G, cutoff=GRAM_CUTOFF):
    """Append the part of ``new`` that is G-orthogonal to ``basis``.

    ``basis`` is assumed G-orthonormal and is kept unchanged as the leading
    columns. New directions whose residual Gram eigenvalue (relative to the
    G-norm of the new vectors) falls below ``cutoff`` are dropped.
    """
    new = np.asarray(new, dtype=float)
    if new.ndim == 1:
        new = new[:, None]
    norms = np.sqrt(np.einsum("ik,ik->k", new, G @ new))
    R = new / norms
    if basis is not None and basis.shape[1]:
        for _ in range(2):
            R = R - basis @ (basis.T @ (G @ R))
    gram = R.T @ (G @ R)
    lam, V = la.eigh(0.5 * (gram + gram.T))
    keep = lam > cutoff
    if not keep.any():
        return basis, 0
    lam, V = lam[keep][::-1], V[:, keep][:, ::-1]
    extra = R @ (V / np.sqrt(lam))
    # one more projection pass for orthogonality against the old block
    if basis is not None and basis.shape[1]:
        extra = extra - basis @ (basis.T @ (G @ extra))
        extra, _ = gram_orthonormalize(extra, G, cutoff=0.0)
        return np.column_stack([basis, extra]), extra.shape[1]
    return extra, extra.shape[1]


@dataclass
class PairSpace:
    """Mesh, one-body matrices and the wedge operators that never change during a run."""

    mesh: object
    basis: PairBasis = field(init=False)
    mass: object = field(init=False)
    stiffness: object = field(init=False)

    def __post_init__(self):
        self.basis = PairBasis(self.mesh.n1)
        self.mass = assemble_mass(self.mesh)
        self.stiffness = assemble_stiffness(self.mesh)

    @property
    def n2(self):
        return self.basis.n2

    @cached_property
    def gram(self):
        return assemble_pair_gram(self.mass, self.basis)

    @cached_property
    def kinetic(self):
        return assemble_pair_kinetic(self.stiffness, self.mass, self.basis)

    def onebody(self, vmass):
        return assemble_pair_onebody(vmass, self.mass, self.basis)

    def interaction(self, kernel="softcore", eps=1.0):
        return assemble_interaction(self.mesh, kernel, eps, self.basis)

    def norm(self, c):
        return float(np.sqrt(c @ (self.gram @ c)))

    def density(self, psi_a, psi_b=None):
        psi_b = psi_a if psi_b is None else psi_b
        diag, off = transition_bands(np.column_stack([psi_a, psi_b]), self.mass, self.basis)
        return PiecewiseQuadratic.from_band(self.mesh, diag[0, 1], off[0, 1])
