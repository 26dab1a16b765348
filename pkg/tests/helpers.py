"""Independent brute-force oracles shared by the tests."""

import numpy as np

from mcal import sdp


def hat_values(mesh, x):
    """Interior P1 hats evaluated at points ``x``: shape ``x.shape + (n1,)``."""
    xi = mesh.interior
    return np.clip(1.0 - np.abs(np.asarray(x)[..., None] - xi) / mesh.h, 0.0, None)


def composite_gauss(a, b, cells, order):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, cells + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * t).ravel(), (0.5 * (hi - lo) * w).ravel()


def wedge_values(mesh, basis, coeffs, x, y):
    """``Psi(x_a, y_b)`` on a tensor grid for wedge coefficient columns.

    Returns shape ``(K, len(x), len(y))``.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float).T).T
    Cm = basis.to_matrix(coeffs)  # (K, n1, n1), already carries 1/sqrt(2)
    px, py = hat_values(mesh, x), hat_values(mesh, y)
    return np.einsum("ap,kpq,bq->kab", px, Cm, py)


def grid_for(mesh, cells_per_element, order=4, shift=False):
    """Composite rule aligned with the mesh; ``shift`` uses a different order for y."""
    n = mesh.D * cells_per_element
    x, wx = composite_gauss(-mesh.L, mesh.L, n, order)
    y, wy = composite_gauss(-mesh.L, mesh.L, n, order + (1 if shift else 0))
    return x, wx, y, wy


def kkt_instance(rng, K, J, rank=None):
    """Instance with a known complementary optimum and strictly feasible points.

    ``X*`` (rank r) and ``S*`` (rank K - r) share an eigenbasis, so they are
    complementary; the constraints are orthogonal to ``X* - X0`` for a
    positive definite ``X0`` of the same trace, which makes ``X0`` strictly
    feasible, and ``A_1 = I`` gives the strictly feasible dual point
    ``y* - e_1``.
    """
    r = rank or int(rng.integers(1, K))
    Q = np.linalg.qr(rng.standard_normal((K, K)))[0]
    Xs = (Q[:, :r] * rng.uniform(0.5, 2.0, r)) @ Q[:, :r].T
    Ss = (Q[:, r:] * rng.uniform(0.5, 2.0, K - r)) @ Q[:, r:].T
    B = rng.standard_normal((K, K))
    X0 = B @ B.T + 0.5 * np.eye(K)
    X0 *= np.trace(Xs) / np.trace(X0)
    D = Xs - X0
    A = [np.eye(K)]
    for _ in range(J - 1):
        R = rng.standard_normal((K, K))
        R = R + R.T
        R -= np.vdot(R, D) / np.vdot(D, D) * D
        A.append(R)
    A = np.array(A)
    ys = rng.standard_normal(J)
    C = Ss + np.einsum("j,jkl->kl", ys, A)
    b = np.einsum("jkl,kl->j", A, Xs)
    return sdp.SdpProblem(C, A, b), Xs, ys
