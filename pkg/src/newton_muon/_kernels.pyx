# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel implementations.

Same surface as _kernels_py: symmetric products with exact mirroring,
unblocked Cholesky, forward-substitution triangular inverse, cyclic Jacobi
eigendecomposition, one-sided Jacobi SVD, and the warm-started Stieltjes
fixed-point solver.
"""
import numpy as np

cimport numpy as cnp
from libc.float cimport DBL_EPSILON
from libc.math cimport fabs, sqrt

from .errors import FixedPointDiverged, NotPositiveDefinite

cnp.import_array()

BACKEND_NAME = "compiled"

EIG_SWEEP_CAP = 100
SVD_SWEEP_CAP = 100


def syrk(double[:, ::1] Z):
    """Z @ Z.T, lower triangle computed and mirrored."""
    cdef Py_ssize_t n = Z.shape[0], N = Z.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, n))
    cdef double[:, ::1] C = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = 0.0
            for k in range(N):
                acc += Z[i, k] * Z[j, k]
            C[i, j] = acc
            C[j, i] = acc
    return out


def sypp(double[:, ::1] P, double[:, ::1] Q):
    """P @ Q for commuting symmetric factors, lower triangle mirrored."""
    cdef Py_ssize_t n = P.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, n))
    cdef double[:, ::1] C = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = 0.0
            for k in range(n):
                acc += P[i, k] * Q[k, j]
            C[i, j] = acc
            C[j, i] = acc
    return out


def chol_lower(double[:, ::1] K):
    """Unblocked lower Cholesky; NotPositiveDefinite on a nonpositive pivot."""
    cdef Py_ssize_t n = K.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, n))
    cdef double[:, ::1] L = out
    cdef Py_ssize_t i, j, k
    cdef double acc, piv
    for j in range(n):
        acc = K[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if acc <= 0.0:
            raise NotPositiveDefinite(f"pivot {acc:.3e} at index {j}")
        piv = sqrt(acc)
        L[j, j] = piv
        for i in range(j + 1, n):
            acc = K[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / piv
    return out


def tri_inv_lower(double[:, ::1] L):
    """Inverse of a lower-triangular matrix by forward substitution."""
    cdef Py_ssize_t n = L.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, n))
    cdef double[:, ::1] M = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(n):
        M[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            acc = 0.0
            for k in range(j, i):
                acc += L[i, k] * M[k, j]
            M[i, j] = -acc / L[i, i]
    return out


def eigh_desc(double[:, ::1] K):
    """Cyclic Jacobi eigendecomposition, eigenvalues descending."""
    cdef Py_ssize_t n = K.shape[0]
    cdef cnp.ndarray[double, ndim=2] A_arr = np.array(K, copy=True)
    cdef cnp.ndarray[double, ndim=2] V_arr = np.eye(n)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t p, q, k, sweep
    cdef double off, scale, apq, app, aqq, theta, t, c, s, akp, akq
    scale = 0.0
    for p in range(n):
        for q in range(n):
            scale += A[p, q] * A[p, q]
    scale = sqrt(scale)
    if scale == 0.0:
        return np.zeros(n), V_arr
    cdef double stop = 1e-14 * scale
    for sweep in range(EIG_SWEEP_CAP):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * A[p, q] * A[p, q]
        if sqrt(off) <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if fabs(apq) <= 1e-18 * scale:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                theta = 0.5 * (aqq - app) / apq
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = A[p, k]
                    akq = A[q, k]
                    A[p, k] = c * akp - s * akq
                    A[q, k] = s * akp + c * akq
                for k in range(n):
                    akp = V[k, p]
                    akq = V[k, q]
                    V[k, p] = c * akp - s * akq
                    V[k, q] = s * akp + c * akq
    else:
        raise RuntimeError(f"Jacobi eigensolver: no convergence in {EIG_SWEEP_CAP} sweeps")
    w = np.diagonal(A_arr).copy()
    order = np.argsort(w)[::-1]
    return np.ascontiguousarray(w[order]), np.ascontiguousarray(V_arr[:, order])


def svd_thin(A_in):
    """Thin SVD via one-sided Jacobi on the wide-or-square orientation."""
    cdef bint transposed = A_in.shape[0] < A_in.shape[1]
    cdef cnp.ndarray[double, ndim=2] W_arr
    if transposed:
        W_arr = np.array(A_in.T, copy=True, order="C")
    else:
        W_arr = np.array(A_in, copy=True, order="C")
    cdef Py_ssize_t m = W_arr.shape[0], n = W_arr.shape[1]
    cdef cnp.ndarray[double, ndim=2] V_arr = np.eye(n)
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t p, q, k, sweep
    cdef double a, b, g, zeta, t, c, s, wp, wq
    cdef bint converged
    # Stop just above the rounding floor of the Gram accumulation (~sqrt(m) ulp);
    # a loose fixed tolerance here leaks into the singular vectors of
    # ill-conditioned inputs with errors of order tol * smax / smin.
    cdef double tol = (16.0 + sqrt(<double> m)) * DBL_EPSILON
    for sweep in range(SVD_SWEEP_CAP):
        converged = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = 0.0
                b = 0.0
                g = 0.0
                for k in range(m):
                    wp = W[k, p]
                    wq = W[k, q]
                    a += wp * wp
                    b += wq * wq
                    g += wp * wq
                if a == 0.0 or b == 0.0 or fabs(g) <= tol * sqrt(a * b):
                    continue
                converged = False
                zeta = 0.5 * (b - a) / g
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    wp = W[k, p]
                    wq = W[k, q]
                    W[k, p] = c * wp - s * wq
                    W[k, q] = s * wp + c * wq
                for k in range(n):
                    wp = V[k, p]
                    wq = V[k, q]
                    V[k, p] = c * wp - s * wq
                    V[k, q] = s * wp + c * wq
        if converged:
            break
    else:
        raise RuntimeError(f"Jacobi SVD: no convergence in {SVD_SWEEP_CAP} sweeps")
    sv = np.sqrt(np.sum(W_arr * W_arr, axis=0))
    order = np.argsort(sv)[::-1]
    sv = sv[order]
    U_arr = W_arr[:, order]
    V_sorted = V_arr[:, order]
    nz = sv > 0.0
    U_arr[:, nz] = U_arr[:, nz] / sv[nz]
    if transposed:
        return np.ascontiguousarray(V_sorted), sv, np.ascontiguousarray(U_arr)
    return np.ascontiguousarray(U_arr), sv, np.ascontiguousarray(V_sorted)


def stieltjes_grid(
    double[::1] lam_sq,
    double[::1] xs,
    double eta,
    double damping,
    double tol,
    long max_iter,
):
    """Warm-started damped fixed-point solve of the spectral self-map on a grid."""
    cdef Py_ssize_t G = xs.shape[0], nlam = lam_sq.shape[0]
    cdef cnp.ndarray[complex, ndim=1] out = np.empty(G, dtype=np.complex128)
    cdef double complex m, m_new, f, z, acc
    cdef Py_ssize_t i, k
    cdef long it
    cdef bint ok
    m = 0.0
    for i in range(G):
        z = xs[i] + 1j * eta
        if i == 0:
            m = -1.0 / z
        ok = False
        for it in range(max_iter):
            acc = 0.0
            for k in range(nlam):
                acc += 1.0 / (1.0 + lam_sq[k] * m)
            f = -(acc / nlam) / z
            m_new = (1.0 - damping) * m + damping * f
            if m_new.imag <= 0.0:
                m_new = m_new.real + 1e-300j
            if abs(m_new - m) <= tol:
                m = m_new
                ok = True
                break
            m = m_new
        if not ok:
            raise FixedPointDiverged(
                f"no convergence at x={xs[i]!r} after {max_iter} iterations"
            )
        out[i] = m
    return out
