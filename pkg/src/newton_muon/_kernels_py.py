"""Pure-numpy kernel implementations.

Fallback used when the compiled extension is unavailable (or forced via
NEWTON_MUON_BACKEND=python). Symmetric outputs are produced by computing one
triangle's worth of information and mirroring, so results are exactly
symmetric entrywise, matching the compiled kernels' contract.
"""
from __future__ import annotations

import numpy as np

from .errors import FixedPointDiverged, NotPositiveDefinite

BACKEND_NAME = "python"


def _mirror_lower(M: np.ndarray) -> np.ndarray:
    """Copy the strict lower triangle onto the upper one, in place."""
    il, jl = np.tril_indices(M.shape[0], -1)
    M[jl, il] = M[il, jl]
    return M


def syrk(Z: np.ndarray) -> np.ndarray:
    """Z @ Z.T with exact entrywise symmetry."""
    return _mirror_lower(Z @ Z.T)


def sypp(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Symmetric product P @ Q for commuting symmetric P, Q, mirrored."""
    return _mirror_lower(P @ Q)


def chol_lower(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; NotPositiveDefinite on a nonpositive pivot."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def tri_inv_lower(L: np.ndarray) -> np.ndarray:
    """Inverse of a lower-triangular matrix."""
    n = L.shape[0]
    return np.linalg.solve(L, np.eye(n))


def eigh_desc(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition, eigenvalues descending."""
    w, V = np.linalg.eigh(K)
    return np.ascontiguousarray(w[::-1]), np.ascontiguousarray(V[:, ::-1])


def svd_thin(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD (U, s, V) with s descending and V holding right vectors as columns."""
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    return U, s, np.ascontiguousarray(Vh.T)


def stieltjes_grid(
    lam_sq: np.ndarray,
    xs: np.ndarray,
    eta: float,
    damping: float,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Stieltjes transform of the squared-singular-value law on a real grid.

    Solves m = -(1/z) * mean_k 1/(1 + lam_k^2 m) at z = x + i*eta for each
    grid point by damped fixed-point iteration, warm-starting each point from
    its neighbor. Returns the complex solution array.
    """
    out = np.empty(len(xs), dtype=np.complex128)
    m = None
    for i, x in enumerate(xs):
        z = complex(x, eta)
        if m is None:
            m = -1.0 / z
        for it in range(max_iter):
            f = -np.mean(1.0 / (1.0 + lam_sq * m)) / z
            m_new = (1.0 - damping) * m + damping * f
            if m_new.imag <= 0.0:
                m_new = complex(m_new.real, 1e-300)
            if abs(m_new - m) <= tol:
                m = m_new
                break
            m = m_new
        else:
            raise FixedPointDiverged(f"no convergence at x={x!r} after {max_iter} iterations")
        out[i] = m
    return out
