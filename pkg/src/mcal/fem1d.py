"""Uniform P1 finite elements on (-L, L) with homogeneous Dirichlet conditions.

Only the ``D - 1`` interior hat functions are kept as degrees of freedom, so
every assembled form lives on H^1_0 by construction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh1D",
    "TriDiagSym",
    "PiecewiseQuadratic",
    "build_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "interpolate",
    "gauss_rule",
]


def gauss_rule(n, a=0.0, b=1.0):
    """Gauss-Legendre nodes and weights mapped to ``[a, b]``."""
    t, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


@dataclass(frozen=True)
class Mesh1D:
    L: float
    D: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self):
        return 2.0 * self.L / self.D

    @property
    def n1(self):
        return self.D - 1

    @property
    def interior(self):
        return self.nodes[1:-1]


def build_mesh(L, D):
    """Uniform partition of ``(-L, L)`` into ``D`` intervals.

    >>> build_mesh(1.0, 4).nodes
    array([-1. , -0.5,  0. ,  0.5,  1. ])
    """
    D = int(D)
    if D < 3:
        raise ValueError(f"need D >= 3 intervals for a non-trivial wedge space, got D={D}")
    if not L > 0:
        raise ValueError(f"half-width L must be positive, got {L}")
    nodes = np.linspace(-L, L, D + 1)
    nodes.setflags(write=False)
    return Mesh1D(float(L), D, nodes)


@dataclass(frozen=True)
class TriDiagSym:
    """Symmetric tridiagonal bilinear form on the interior hat functions."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def n(self):
        return self.diag.shape[0]

    def to_sparse(self, fmt="csr"):
        return sp.diags([self.off, self.diag, self.off], [-1, 0, 1], format=fmt)

    def to_dense(self):
        return self.to_sparse().toarray()

    def matvec(self, u):
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def quad(self, u, w=None):
        w = u if w is None else w
        return float(w @ self.matvec(u))

    def __add__(self, other):
        return TriDiagSym(self.diag + other.diag, self.off + other.off)

    def __mul__(self, c):
        return TriDiagSym(c * self.diag, c * self.off)

    __rmul__ = __mul__


def assemble_mass(mesh):
    h = mesh.h
    n = mesh.n1
    return TriDiagSym(np.full(n, 2.0 * h / 3.0), np.full(n - 1, h / 6.0))


def assemble_stiffness(mesh):
    """Raw ``int phi_i' phi_j'``; the 1/2 of the kinetic operator is applied later."""
    h = mesh.h
    n = mesh.n1
    return TriDiagSym(np.full(n, 2.0 / h), np.full(n - 1, -1.0 / h))


def _subintervals(mesh, breakpoints):
    """Split every element at the given breakpoints.

    Returns the sub-interval endpoints and the index of the owning element.
    """
    x = mesh.nodes
    if breakpoints is None or len(breakpoints) == 0:
        return x[:-1], x[1:], np.arange(mesh.D)
    bp = np.asarray(breakpoints, dtype=float)
    tol = 1e-12 * mesh.L
    bp = bp[(bp > x[0] + tol) & (bp < x[-1] - tol)]
    # drop breakpoints that coincide with mesh nodes
    near = np.abs(bp[:, None] - x[None, :]).min(axis=1) > tol if bp.size else bp.astype(bool)
    pts = np.union1d(x, bp[near])
    a, b = pts[:-1], pts[1:]
    elem = np.clip(np.searchsorted(x, 0.5 * (a + b)) - 1, 0, mesh.D - 1)
    return a, b, elem


def _eval(f, x):
    return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)


def assemble_weighted_mass(mesh, v, breakpoints=None, ngauss=4):
    """Galerkin matrix of ``int v phi_i phi_j``.

    Parameters
    ----------
    mesh : Mesh1D
    v : callable
        Vectorized potential ``v(x)``.
    breakpoints : array_like, optional
        Points where ``v`` has kinks (e.g. the nodes of a coarser hat grid).
        Elements are split there so the rule stays exact for piecewise
        linear ``v``.
    ngauss : int
        Gauss-Legendre points per (sub-)interval.
    """
    a, b, elem = _subintervals(mesh, breakpoints)
    t, w = np.polynomial.legendre.leggauss(ngauss)
    half = 0.5 * (b - a)
    xq = 0.5 * (a + b)[:, None] + half[:, None] * t[None, :]
    wq = half[:, None] * w[None, :]
    vals = _eval(v, xq)
    bad = ~np.isfinite(vals)
    if bad.any():
        e = int(elem[np.argwhere(bad)[0, 0]])
        raise ValueError(f"potential is not finite on element {e} "
                         f"[{mesh.nodes[e]:.6g}, {mesh.nodes[e + 1]:.6g}]")
    loc = (xq - mesh.nodes[elem][:, None]) / mesh.h
    pl, pr = 1.0 - loc, loc
    wv = wq * vals
    m00 = np.einsum("sq,sq,sq->s", wv, pl, pl)
    m01 = np.einsum("sq,sq,sq->s", wv, pl, pr)
    m11 = np.einsum("sq,sq,sq->s", wv, pr, pr)

    nnode = mesh.D + 1
    diag = np.zeros(nnode)
    off = np.zeros(mesh.D)
    np.add.at(diag, elem, m00)
    np.add.at(diag, elem + 1, m11)
    np.add.at(off, elem, m01)
    # keep interior nodes 1..D-1 and couplings between them
    return TriDiagSym(diag[1:-1], off[1:-1])


def interpolate(mesh, f):
    """Nodal values of ``f`` at the interior nodes.

    Boundary values are discarded: the space carries homogeneous Dirichlet
    conditions, so ``f(+-L) != 0`` is silently replaced by zero.
    """
    vals = _eval(f, mesh.interior).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated function is not finite at an interior node")
    return vals


class PiecewiseQuadratic:
    """Function that is a quadratic polynomial on every mesh element.

    Stored as ``c0 + c1 t + c2 t**2`` with local coordinate ``t`` in [0, 1].
    """

    def __init__(self, mesh, coeffs):
        self.mesh = mesh
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(mesh.D, 3)

    @classmethod
    def from_nodal_form(cls, mesh, g0, g01, g1):
        """Build ``g0 (1-t)^2 + 2 g01 t (1-t) + g1 t^2`` per element."""
        c = np.column_stack([g0, 2.0 * (g01 - g0), g0 - 2.0 * g01 + g1])
        return cls(mesh, c)

    @classmethod
    def from_band(cls, mesh, diag, off):
        """Density ``sum_pr gamma_pr phi_p phi_r`` from the tridiagonal band of gamma."""
        d = np.zeros(mesh.D + 1)
        d[1:-1] = diag
        o = np.zeros(mesh.D)
        o[1:-1] = off
        return cls.from_nodal_form(mesh, d[:-1], o, d[1:])

    @classmethod
    def from_nodal_values(cls, mesh, values):
        """Piecewise linear interpolant of nodal values (all D+1 nodes)."""
        v = np.asarray(values, dtype=float)
        c = np.column_stack([v[:-1], v[1:] - v[:-1], np.zeros(mesh.D)])
        return cls(mesh, c)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        m = self.mesh
        e = np.clip(((x + m.L) / m.h).astype(int), 0, m.D - 1)
        t = (x - m.nodes[e]) / m.h
        c = self.coeffs[e]
        return c[..., 0] + t * (c[..., 1] + t * c[..., 2])

    def __add__(self, other):
        return PiecewiseQuadratic(self.mesh, self.coeffs + other.coeffs)

    def __mul__(self, s):
        return PiecewiseQuadratic(self.mesh, s * self.coeffs)

    __rmul__ = __mul__

    def integral(self):
        c = self.coeffs
        return float(self.mesh.h * (c[:, 0] + c[:, 1] / 2.0 + c[:, 2] / 3.0).sum())

    def integrate_against(self, funcs, breakpoints=None, ngauss=3):
        """Integrals ``int f_k * self`` for a vectorized family ``funcs(x) -> (..., K)``.

        Exact when each ``f_k`` is a polynomial of degree <= 2*ngauss-3 between
        consecutive mesh nodes and ``breakpoints``.
        """
        a, b, _ = _subintervals(self.mesh, breakpoints)
        t, w = np.polynomial.legendre.leggauss(ngauss)
        half = 0.5 * (b - a)
        xq = (0.5 * (a + b)[:, None] + half[:, None] * t[None, :]).ravel()
        wq = (half[:, None] * w[None, :]).ravel()
        fx = np.asarray(funcs(xq), dtype=float)
        return np.einsum("q,q,q...->...", wq, self(xq), fx)

    def nodal_values(self):
        """Values at all D+1 mesh nodes."""
        c = self.coeffs
        right = c.sum(axis=1)
        return np.concatenate([c[:1, 0], right])
