"""Dense f64 linear-algebra kernels the rest of the library builds on.

All operations take and return plain numpy arrays. Symmetric results are
exactly symmetric entrywise (one triangle computed, then mirrored). Inputs
with NaN/Inf are rejected up front instead of letting them propagate.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .backend import kernels
from .errors import NotPSD

DEFAULT_RANK_TOL = 1e-12

_SYM_CHECK_REL = 1e-10


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a C-contiguous float64 2-D array."""
    M = np.ascontiguousarray(A, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains NaN or Inf")
    return M


def as_sym_matrix(K, name: str = "matrix") -> np.ndarray:
    """Like as_matrix, additionally requiring square and symmetric input."""
    M = as_matrix(K, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and float(np.max(np.abs(M - M.T))) > _SYM_CHECK_REL * scale:
        raise ValueError(f"{name} is not symmetric")
    return M


class CompactSVD(NamedTuple):
    U: np.ndarray  # m x r, orthonormal columns
    s: np.ndarray  # r positive singular values, descending
    V: np.ndarray  # n x r, orthonormal columns


def matmul(A, B) -> np.ndarray:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    return A @ B


def syrk(Z) -> np.ndarray:
    """Z @ Z.T as an exactly symmetric matrix."""
    Z = as_matrix(Z, "Z")
    return kernels.syrk(Z)


def sypp(P, Q, check: bool = False) -> np.ndarray:
    """Product of two commuting symmetric matrices, mirrored to exact symmetry.

    Both arguments must be polynomials in the same matrix; with check=True the
    commutator norm is verified against caller error.
    """
    P = as_sym_matrix(P, "P")
    Q = as_sym_matrix(Q, "Q")
    if P.shape != Q.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {Q.shape}")
    if check:
        comm = float(np.linalg.norm(P @ Q - Q @ P))
        lim = 1e-10 * max(1.0, float(np.linalg.norm(P)) * float(np.linalg.norm(Q)))
        if comm > lim:
            raise ValueError(f"arguments do not commute: |PQ-QP|_F = {comm:.3e}")
    return kernels.sypp(P, Q)


def cholesky_factor(K) -> np.ndarray:
    """Lower Cholesky factor L with K = L L^T; NotPositiveDefinite otherwise."""
    K = as_sym_matrix(K, "K")
    return kernels.chol_lower(K)


def cholesky_inverse(K) -> np.ndarray:
    """Inverse of an SPD matrix via L^{-T} L^{-1}, exactly symmetric."""
    K = as_sym_matrix(K, "K")
    L_inv = kernels.tri_inv_lower(kernels.chol_lower(K))
    return kernels.syrk(np.ascontiguousarray(L_inv.T))


def compact_svd(A, rank_tol: float = DEFAULT_RANK_TOL) -> CompactSVD:
    """Compact SVD keeping singular values above rank_tol * sigma_max.

    The zero matrix yields empty factors (r = 0), which downstream encodes
    the convention that the matrix-sign of 0 is 0.
    """
    A = as_matrix(A, "A")
    if rank_tol < 0:
        raise ValueError("rank_tol must be >= 0")
    m, n = A.shape
    if not np.any(A):
        return CompactSVD(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    U, s, V = kernels.svd_thin(A)
    r = int(np.sum(s > rank_tol * s[0]))
    return CompactSVD(
        np.ascontiguousarray(U[:, :r]), s[:r].copy(), np.ascontiguousarray(V[:, :r])
    )


def sym_eig(K) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (w, P) with eigenvalues descending and eigenvectors as the
    columns of P, so K = P diag(w) P^T.
    """
    K = as_sym_matrix(K, "K")
    return kernels.eigh_desc(K)


def psd_sqrt(K) -> np.ndarray:
    """Unique PSD square root of a PSD matrix.

    Eigenvalues slightly negative from rounding are clamped to zero;
    anything below -1e-6 * lambda_max is treated as a genuinely indefinite
    input and raises NotPSD.
    """
    K = as_sym_matrix(K, "K")
    w, P = sym_eig(K)
    lam_max = max(float(w[0]), 0.0) if w.size else 0.0
    if w.size and float(w[-1]) < -1e-6 * lam_max:
        raise NotPSD(f"eigenvalue {w[-1]:.3e} below -1e-6 * lambda_max = {lam_max:.3e}")
    w = np.maximum(w, 0.0)
    root = (P * np.sqrt(w)) @ P.T
    il, jl = np.tril_indices(root.shape[0], -1)
    root[jl, il] = root[il, jl]  # mirror to exact symmetry
    return root


def spec_norm_upper(K, iters: int = 64, safety: float = 1.02) -> float:
    """Upper estimate of lambda_max for PSD K: power iteration times safety."""
    K = as_sym_matrix(K, "K")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if safety < 1.0:
        raise ValueError("safety must be >= 1")
    n = K.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    est = 0.0
    for _ in range(iters):
        y = K @ x
        est = float(np.linalg.norm(y))
        if est == 0.0:
            return 0.0
        x = y / est
    return safety * est
