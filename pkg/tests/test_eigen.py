import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from mcal.eigen import EigenError, TensorPreconditioner, smallest_eigpairs
from mcal.fem1d import assemble_weighted_mass, build_mesh
from mcal.pair_space import PairSpace

BOX = 5 * np.pi**2 / 800


def _diag_pencil(n=300):
    d = np.arange(1.0, n + 1)
    return sp.diags(d).tocsr(), sp.identity(n, format="csr"), d


def test_diagonal_pencil_dense():
    H, G, d = _diag_pencil()
    res = smallest_eigpairs(H, G, 3)
    assert res.method == "dense"
    assert_allclose(res.values, [1.0, 2.0, 3.0], atol=1e-12)
    assert_allclose(np.abs(res.vectors[:3, :3]), np.eye(3), atol=1e-12)


def test_diagonal_pencil_lobpcg():
    H, G, d = _diag_pencil()
    precond = sp.diags(1.0 / d)
    res = smallest_eigpairs(H, G, 3, tol=1e-9, precond=precond, dense_threshold=10)
    assert res.method == "lobpcg"
    assert_allclose(res.values, [1.0, 2.0, 3.0], rtol=1e-9)
    assert np.all(res.residuals <= 1e-9 * np.maximum(1, res.values))


def test_shift_moves_every_eigenvalue():
    H, G, _ = _diag_pencil(50)
    a = smallest_eigpairs(H, G, 2).values
    b = smallest_eigpairs(H + 7.5 * G, G, 2).values
    assert_allclose(b - a, 7.5, atol=1e-12)


@pytest.fixture(scope="module")
def space56():
    return PairSpace(build_mesh(10.0, 56))


def test_dense_and_iterative_agree(space56):
    sp_ = space56
    H = (sp_.kinetic + sp_.interaction("softcore", 1.0)).tocsr()
    ref = smallest_eigpairs(H, sp_.gram, 4)
    it = smallest_eigpairs(H, sp_.gram, 4, tol=1e-9, precond=TensorPreconditioner(sp_),
                           dense_threshold=100)
    assert it.method == "lobpcg"
    assert_allclose(it.values, ref.values, rtol=1e-10)
    for v in (ref.vectors, it.vectors):
        assert_allclose(v.T @ (sp_.gram @ v), np.eye(4), atol=1e-10)
    # eigenvectors agree up to sign (the spectrum is simple here)
    overlap = np.abs(np.einsum("ik,ik->k", ref.vectors, sp_.gram @ it.vectors))
    assert_allclose(overlap, 1.0, atol=1e-7)


def test_box_ground_energy_second_order():
    errs = []
    for D in (100, 200):
        space = PairSpace(build_mesh(10.0, D))
        res = smallest_eigpairs(space.kinetic, space.gram, 1, tol=1e-10,
                                precond=TensorPreconditioner(space))
        errs.append(res.values[0] - BOX)
    assert errs[1] / BOX < 1e-3
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_constant_potential_shift(space56):
    c = 0.3
    H = space56.kinetic.tocsr()
    Vm = space56.mass * c
    E0 = smallest_eigpairs(H, space56.gram, 1).values[0]
    Ec = smallest_eigpairs((H - space56.onebody(Vm)).tocsr(), space56.gram, 1).values[0]
    assert Ec == pytest.approx(E0 - 2 * c, abs=1e-12)


def test_preconditioner_inverts_the_one_body_operator():
    space = PairSpace(build_mesh(3.0, 10))
    Vm = assemble_weighted_mass(space.mesh, lambda x: np.exp(-x * x))
    shift = 0.8
    P = TensorPreconditioner(space, shift=shift, vmass=Vm)
    A = (space.kinetic - space.onebody(Vm) + shift * space.gram).toarray()
    r = np.random.default_rng(0).standard_normal(space.n2)
    assert_allclose(A @ (P @ r), r, atol=1e-10)
    R = np.random.default_rng(1).standard_normal((space.n2, 3))
    assert_allclose(A @ P.matmat(R), R, atol=1e-10)


def test_preconditioner_rejects_indefinite_shift():
    space = PairSpace(build_mesh(3.0, 10))
    with pytest.raises(ValueError):
        TensorPreconditioner(space, shift=-100.0)


def test_gram_not_positive_definite():
    H, _, _ = _diag_pencil(10)
    G = sp.diags(np.r_[np.ones(9), -1.0])
    with pytest.raises(EigenError):
        smallest_eigpairs(H, G, 1)


@pytest.mark.parametrize("q", [0, 10])
def test_bad_block_size(q):
    H, G, _ = _diag_pencil(10)
    with pytest.raises(ValueError):
        smallest_eigpairs(H, G, q)


def test_lobpcg_reports_non_convergence():
    H, G, d = _diag_pencil(400)
    with pytest.raises(EigenError) as info:
        smallest_eigpairs(H, G, 2, tol=1e-14, dense_threshold=10, maxiter=2)
    assert info.value.residuals is not None
