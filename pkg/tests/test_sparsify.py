import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from mcal.sparsify import SparseState, caratheodory_reduce, spectral_sparsify


def test_spectral_diagonal():
    pool = np.eye(3)
    st_ = spectral_sparsify(np.diag([0.3, 0.7, 0.0]), pool)
    assert st_.K == 2
    assert_allclose(st_.weights, [0.7, 0.3])
    assert_allclose(np.abs(st_.states), np.eye(3)[:, [1, 0]], atol=1e-15)
    assert st_.trace == pytest.approx(1.0)


def test_spectral_rank_one():
    u = np.array([0.6, 0.8])
    st_ = spectral_sparsify(2.0 * np.outer(u, u), np.eye(2))
    assert st_.K == 1
    assert st_.weights[0] == pytest.approx(2.0)
    assert_allclose(np.abs(st_.states[:, 0]), u, atol=1e-14)


def test_spectral_reproduces_the_density_matrix():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((6, 3))
    S = B @ B.T  # rank 3
    pool = np.linalg.qr(rng.standard_normal((20, 6)))[0]
    st_ = spectral_sparsify(S, pool)
    assert st_.K == 3
    assert np.all(np.diff(st_.weights) <= 0)
    gamma = (st_.states * st_.weights) @ st_.states.T
    assert_allclose(gamma, pool @ S @ pool.T, atol=1e-12)
    assert_allclose(st_.states.T @ st_.states, np.eye(3), atol=1e-12)


def test_spectral_rejects_bad_input():
    with pytest.raises(ValueError, match="positive semidefinite"):
        spectral_sparsify(np.diag([1.0, -0.5]), np.eye(2))
    with pytest.raises(ValueError, match="does not match"):
        spectral_sparsify(np.eye(3), np.eye(2))


def test_subset_sorts_weights():
    s = SparseState(np.array([3.0, 2.0, 1.0]), np.eye(3))
    t = s.subset([2, 0], weights=[5.0, 1.0])
    assert_array_equal(t.weights, [5.0, 1.0])
    assert_array_equal(t.states, np.eye(3)[:, [2, 0]])


def test_caratheodory_single_moment():
    idx, w = caratheodory_reduce([0.2, 0.5, 0.3], np.ones((3, 1)))
    assert idx.size == 1
    assert w[0] == pytest.approx(1.0)


def test_caratheodory_three_atoms_two_moments():
    V = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    idx, w = caratheodory_reduce([1.0, 1.0, 1.0], V)
    # null direction (1, 1, -1): moving along it empties atoms 0 and 1 together
    assert_array_equal(idx, [2])
    assert_allclose(w, [2.0])


def test_caratheodory_small_input_unchanged():
    V = np.random.default_rng(1).standard_normal((3, 4))
    idx, w = caratheodory_reduce([0.1, 0.2, 0.3], V)
    assert_array_equal(idx, [0, 1, 2])
    assert_array_equal(w, [0.1, 0.2, 0.3])


def test_caratheodory_rejects_bad_input():
    with pytest.raises(ValueError):
        caratheodory_reduce([1.0, 0.0], np.ones((2, 1)))
    with pytest.raises(ValueError):
        caratheodory_reduce([1.0, 1.0], np.ones((3, 1)))
    with pytest.raises(ValueError):
        caratheodory_reduce([], np.ones((0, 1)))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 40), J0=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_caratheodory_preserves_moments(n, J0, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, n)
    V = rng.standard_normal((n, J0))
    V[:, 0] = 1.0  # total mass among the moments, as for hat functions
    idx, w2 = caratheodory_reduce(w, V)
    assert idx.size <= J0
    assert np.all(w2 > 0)
    assert np.all(np.diff(idx) > 0)
    assert_allclose(w2 @ V[idx], w @ V, atol=1e-10 * (1 + np.abs(w @ V).max()))


def test_rotation_leaves_moments_and_energy_unchanged():
    # a density matrix on an orthonormal pool: any quadratic statistic of
    # Gamma is the same before and after the spectral rotation
    rng = np.random.default_rng(2)
    pool = np.linalg.qr(rng.standard_normal((15, 5)))[0]
    B = rng.standard_normal((5, 5))
    S = B @ B.T
    H = rng.standard_normal((15, 15))
    H = H + H.T
    As = [(lambda R: R + R.T)(rng.standard_normal((15, 15))) for _ in range(4)]
    st_ = spectral_sparsify(S, pool)
    before = [np.trace(pool.T @ A @ pool @ S) for A in [H] + As]
    after = [np.einsum("k,ik,ij,jk->", st_.weights, st_.states, A, st_.states) for A in [H] + As]
    assert_allclose(after, before, rtol=1e-12)
