"""Dense kernel contracts: SVD, Cholesky, symmetric products."""
import numpy as np
import pytest

from newton_muon.errors import NotPositiveDefinite, NotPSD
from newton_muon.linalg import (
    cholesky_factor,
    cholesky_inverse,
    compact_svd,
    matmul,
    psd_sqrt,
    spec_norm_upper,
    sym_eig,
    sypp,
    syrk,
)


def random_psd(n, rng, rank=None):
    B = rng.standard_normal((n, rank or n + 2))
    return syrk(B)


def test_compact_svd_reconstructs():
    rng = np.random.default_rng(0)
    for m, n in [(7, 5), (5, 7), (6, 6), (1, 9)]:
        A = rng.standard_normal((m, n))
        U, s, V = compact_svd(A)
        np.testing.assert_allclose((U * s) @ V.T, A, atol=1e-12 * np.linalg.norm(A))
        np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-12)
        assert np.all(np.diff(s) <= 0) and np.all(s > 0)


def test_compact_svd_drops_null_space():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 6))
    U, s, V = compact_svd(A)
    assert s.shape == (3,)
    np.testing.assert_allclose((U * s) @ V.T, A, atol=1e-12 * np.linalg.norm(A))


def test_compact_svd_matches_lapack_values():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((40, 25))
    _, s, _ = compact_svd(A)
    np.testing.assert_allclose(s, np.linalg.svd(A, compute_uv=False), rtol=1e-12)


def test_compact_svd_ill_conditioned_orthogonality():
    rng = np.random.default_rng(3)
    n = 64
    target = np.logspace(0, -8, n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    P, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * target) @ P.T
    U, s, V = compact_svd(A)
    assert np.linalg.norm(U.T @ U - np.eye(U.shape[1])) < 1e-10
    assert np.linalg.norm(V.T @ V - np.eye(V.shape[1])) < 1e-10
    np.testing.assert_allclose(s, target, rtol=1e-8)


def test_cholesky_factor_and_inverse():
    rng = np.random.default_rng(4)
    K = random_psd(9, rng)
    L = cholesky_factor(K)
    assert np.allclose(L, np.tril(L))
    np.testing.assert_allclose(L @ L.T, K, atol=1e-12 * np.linalg.norm(K))
    np.testing.assert_allclose(K @ cholesky_inverse(K), np.eye(9), atol=1e-10)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_factor(np.diag([1.0, -1.0]))


def test_psd_sqrt_squares_back():
    rng = np.random.default_rng(5)
    K = random_psd(8, rng, rank=5)  # genuinely singular
    R = psd_sqrt(K)
    np.testing.assert_allclose(R, R.T, atol=1e-13)
    np.testing.assert_allclose(R @ R, K, atol=1e-11 * np.linalg.norm(K))
    assert np.all(np.linalg.eigvalsh(R) > -1e-12)


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.5]))


def test_spec_norm_upper_is_tight_upper_bound():
    rng = np.random.default_rng(6)
    for _ in range(10):
        K = random_psd(12, rng)
        true = np.linalg.norm(K, 2)
        upper = spec_norm_upper(K)
        assert true <= upper <= 1.1 * true
    assert spec_norm_upper(np.zeros((4, 4))) == 0.0


def test_sym_eig_descending_and_orthonormal():
    rng = np.random.default_rng(7)
    K = random_psd(10, rng)
    w, V = sym_eig(K)
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, K, atol=1e-11)
    np.testing.assert_allclose(V.T @ V, np.eye(10), atol=1e-12)


def test_syrk_equals_outer_product():
    rng = np.random.default_rng(8)
    Z = rng.standard_normal((6, 14))
    K = syrk(Z)
    np.testing.assert_allclose(K, Z @ Z.T, atol=1e-13)
    np.testing.assert_allclose(K, K.T, atol=0)


def test_sypp_matches_dense_product():
    rng = np.random.default_rng(9)
    base = random_psd(11, rng)
    P = base @ base
    Q = 2.0 * base + np.eye(11)
    out = sypp(P, Q, check=True)
    np.testing.assert_allclose(out, P @ Q, rtol=1e-11, atol=1e-11 * np.linalg.norm(P @ Q))
    np.testing.assert_allclose(out, out.T, atol=0)


def test_sypp_check_rejects_non_commuting():
    rng = np.random.default_rng(11)
    P = random_psd(6, rng)
    Q = random_psd(6, rng)
    with pytest.raises(ValueError):
        sypp(P, Q, check=True)


def test_matmul_matches_numpy():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((5, 8))
    B = rng.standard_normal((8, 3))
    np.testing.assert_allclose(matmul(A, B), A @ B, atol=1e-13)
