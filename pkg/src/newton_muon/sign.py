"""Matrix-sign operators: exact via compact SVD, approximate via Newton-Schulz.

msgn(A) = U V^T for a compact SVD A = U S V^T, with msgn(0) = 0. The iterative
variant runs the fixed five-step quintic Newton-Schulz recursion used for the
orthogonalized update directions.
"""
from __future__ import annotations

import numpy as np

from .errors import ZeroMatrix
from .linalg import DEFAULT_RANK_TOL, as_matrix, compact_svd

NS5_COEFFS = (3.4445, -4.7750, 2.0315)
NS5_ITERS = 5


def msgn_exact(
    A, rank_tol: float = DEFAULT_RANK_TOL, rank_floor: float = 0.0
) -> np.ndarray:
    """Exact matrix sign U V^T; the zero matrix maps to the zero matrix.

    rank_floor is an optional absolute singular-value cutoff on top of the
    relative rank_tol. Long iterative runs use it to keep accumulated rounding
    noise from being amplified into unit-norm directions.
    """
    U, s, V = compact_svd(A, rank_tol)
    if rank_floor > 0.0 and s.size:
        keep = s > rank_floor
        U, V = U[:, keep], V[:, keep]
    if U.shape[1] == 0:
        return np.zeros((U.shape[0], V.shape[0]))
    return U @ V.T


def newton_schulz5(A) -> np.ndarray:
    """Five quintic Newton-Schulz iterations approximating msgn(A).

    X_0 = A/|A|_F, then X <- a X + (b (X X^T) + c (X X^T)^2) X with
    (a, b, c) = (3.4445, -4.7750, 2.0315). Applied to the orientation with
    fewer rows; the recursion commutes with transposition.
    """
    A = as_matrix(A, "A")
    norm = float(np.linalg.norm(A))
    if norm == 0.0:
        raise ZeroMatrix("newton_schulz5 requires a nonzero matrix")
    a, b, c = NS5_COEFFS
    transposed = A.shape[0] > A.shape[1]
    X = (A.T if transposed else A) / norm
    for _ in range(NS5_ITERS):
        S = X @ X.T
        X = a * X + (b * S + c * (S @ S)) @ X
    return X.T if transposed else X
