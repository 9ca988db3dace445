import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperbandit.linalg import (
    NotPositiveDefiniteError,
    SpdSystem,
    matmul,
    numerical_rank,
    outer,
    sherman_morrison,
    sherman_morrison_inplace,
    singular_values,
    spd_inverse,
    spd_solve,
    transpose,
)
from oracles import (
    gauss_jordan_inverse,
    gaussian_elimination,
    householder_orthogonal,
    naive_matmul,
    random_spd,
)


def test_spd_solve_examples():
    assert np.allclose(spd_solve(np.eye(2), [3.0, -1.0]), [3.0, -1.0])
    assert np.allclose(spd_solve(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])


def test_spd_solve_matches_elimination():
    rng = np.random.default_rng(8)
    a = random_spd(8, rng)
    b = rng.standard_normal(8)
    assert np.max(np.abs(spd_solve(a, b) - gaussian_elimination(a, b))) <= 1e-8


def test_spd_solve_residuals_many_systems():
    rng = np.random.default_rng(100)
    for k in range(100):
        n = int(rng.integers(1, 51))
        a = random_spd(n, rng, shift=0.1)
        b = rng.standard_normal(n)
        x = spd_solve(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-8 * (1 + np.linalg.norm(b)), k


def test_spd_rejects_non_spd():
    with pytest.raises(NotPositiveDefiniteError):
        SpdSystem([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        SpdSystem([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        SpdSystem(np.ones((2, 3)))
    with pytest.raises(ValueError):
        spd_solve(np.eye(2), np.ones(3))


def test_spd_inverse_matches_gauss_jordan():
    rng = np.random.default_rng(3)
    a = random_spd(10, rng)
    inv = spd_inverse(a)
    assert np.array_equal(inv, inv.T)
    assert np.max(np.abs(inv - gauss_jordan_inverse(a))) <= 1e-8


def test_sherman_morrison_examples():
    assert np.allclose(sherman_morrison(np.eye(2), [1.0, 0.0]), np.diag([0.5, 1.0]))
    a_inv = spd_inverse(random_spd(4, np.random.default_rng(0)))
    assert np.array_equal(sherman_morrison(a_inv, np.zeros(4)), a_inv)


def test_sherman_morrison_thousand_updates():
    rng = np.random.default_rng(2024)
    lam, dim = 0.1, 10
    a = lam * np.eye(dim)
    a_inv = np.eye(dim) / lam
    for _ in range(1000):
        v = rng.standard_normal(dim)
        a += np.outer(v, v)
        sherman_morrison_inplace(a_inv, v)
    assert np.max(np.abs(a_inv - gauss_jordan_inverse(a))) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 25), st.integers(1, 1000), st.integers(0, 2**31))
def test_sherman_morrison_composition_property(dim, k, seed):
    rng = np.random.default_rng(seed)
    vs = rng.standard_normal((k, dim))
    a_inv = np.eye(dim) / 0.1
    for v in vs:
        a_inv = sherman_morrison(a_inv, v)
    direct = np.linalg.inv(0.1 * np.eye(dim) + vs.T @ vs)
    assert np.max(np.abs(a_inv - direct)) <= 1e-8


def test_singular_values_examples():
    assert np.allclose(singular_values(np.diag([3.0, -4.0])), [4.0, 3.0])
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 1.8, 2.4])
    sigma = singular_values(np.outer(u, v))
    assert sigma[0] == pytest.approx(6.0, abs=1e-12)
    assert np.all(np.abs(sigma[1:]) <= 1e-12)


def test_singular_values_frobenius_identity():
    m = np.random.default_rng(6).standard_normal((6, 6))
    sigma = singular_values(m)
    assert abs(np.sum(sigma**2) - np.sum(m**2)) <= 1e-8
    assert np.all(np.diff(sigma) <= 0)


@pytest.mark.parametrize("shape", [(1, 1), (4, 7), (7, 4), (25, 25), (1, 5)])
def test_singular_values_shape_and_lapack(shape):
    m = np.random.default_rng(sum(shape)).standard_normal(shape)
    sigma = singular_values(m)
    assert sigma.shape == (min(shape),)
    assert np.max(np.abs(sigma - np.linalg.svd(m, compute_uv=False))) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31))
def test_singular_values_orthogonal_invariance(rows, cols, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((rows, cols))
    q = householder_orthogonal(rows, rng)
    assert np.max(np.abs(singular_values(q @ m) - singular_values(m))) <= 1e-8


def test_singular_values_exact_rank_of_products():
    rng = np.random.default_rng(11)
    for rank in (1, 2, 5):
        m = rng.standard_normal((25, rank)) @ rng.standard_normal((rank, 25))
        assert numerical_rank(singular_values(m), atol=1e-8) == rank


def test_numerical_rank_thresholds():
    sigma = np.array([10.0, 1.0, 1e-3, 1e-12])
    assert numerical_rank(sigma, atol=1e-8) == 3
    assert numerical_rank(sigma, rtol=1e-2) == 2
    assert numerical_rank(np.zeros(0)) == 0


def test_matmul_outer_transpose():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    assert np.array_equal(matmul(np.eye(3), a), a)
    assert np.allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-15)
    u, v = rng.standard_normal(3), rng.standard_normal(4)
    assert np.array_equal(transpose(outer(u, v)), outer(v, u))


def test_shape_errors():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        outer(np.ones((2, 2)), np.ones(2))
    with pytest.raises(ValueError):
        matmul(np.array([[np.nan]]), np.ones((1, 1)))
