"""Update rules: GD, Muon, Newton-Muon, AdamW, factorized displacement
variants, and the warmup+cosine learning-rate schedule.

The Muon family keeps a heavy-ball momentum buffer and replaces the update
direction with the matrix sign of the buffer. Newton-Muon right-multiplies
the raw gradient by the cached inverse activation second moment before the
buffer is updated, so the preconditioner sees pre-momentum gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroMatrix
from .linalg import as_matrix
from .precond import SecondMomentState, apply_right_precond, maybe_refresh
from .sign import msgn_exact, newton_schulz5

VARIANTS = (
    "gd",
    "muon-svd",
    "muon-ns5",
    "newton-muon-svd",
    "newton-muon-ns5",
    "adamw",
)


@dataclass
class MatrixOptState:
    """Momentum buffer plus hyperparameters for one matrix parameter."""

    momentum: np.ndarray
    lr: float
    mu: float = 0.95
    weight_decay: float = 0.0

    def __post_init__(self):
        self.momentum = as_matrix(self.momentum, "momentum")
        if not (0.0 <= self.mu < 1.0):
            raise ValueError("mu must lie in [0, 1)")
        if self.lr < 0.0:
            raise ValueError("lr must be >= 0")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0


def sign_direction(A, sign_backend: str = "svd") -> np.ndarray:
    """msgn(A) by the requested backend; the zero matrix maps to zero."""
    if sign_backend == "svd":
        return msgn_exact(A)
    if sign_backend == "ns5":
        try:
            return newton_schulz5(A)
        except ZeroMatrix:
            return np.zeros_like(np.asarray(A, dtype=np.float64))
    raise ValueError(f"unknown sign backend {sign_backend!r}")


def gd_step(W, G, lr: float) -> np.ndarray:
    W = as_matrix(W, "W")
    G = as_matrix(G, "G")
    if W.shape != G.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {G.shape}")
    return W - lr * G


def muon_step(state: MatrixOptState, W, G, sign_backend: str = "svd") -> np.ndarray:
    """buf <- mu*buf + G; W <- (1 - lr*wd) W - lr * msgn(buf)."""
    W = as_matrix(W, "W")
    G = as_matrix(G, "G")
    state.momentum = state.mu * state.momentum + G
    direction = sign_direction(state.momentum, sign_backend)
    return (1.0 - state.lr * state.weight_decay) * W - state.lr * direction


def newton_muon_step(
    state: MatrixOptState,
    precond: SecondMomentState,
    W,
    G,
    Z,
    step: int,
    sign_backend: str = "svd",
) -> np.ndarray:
    """Muon step on the right-preconditioned raw gradient G @ K_inv.

    The preconditioner refresh (mutating `precond` in place) happens first,
    and the inverse is applied before momentum accumulation.
    """
    maybe_refresh(precond, Z, step)
    return muon_step(state, W, apply_right_precond(precond, G), sign_backend)


def adamw_direction(state: AdamWState, G) -> np.ndarray:
    """Advance the Adam moments and return the bias-corrected direction."""
    G = as_matrix(G, "G")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * G
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * G * G
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return m_hat / (np.sqrt(v_hat) + state.eps)


def adamw_step(state: AdamWState, W, G) -> np.ndarray:
    """Standard AdamW: bias-corrected moments, decoupled weight decay."""
    W = as_matrix(W, "W")
    update = adamw_direction(state, G)
    return (1.0 - state.lr * state.weight_decay) * W - state.lr * update


def factorized_sigma_direction(M, G, ZZT_inv) -> np.ndarray:
    """Direction M @ msgn(M^T G (ZZ^T)^{-1}) for a displacement factor M.

    Equivalent to the PSD-root form with Sigma_W = M M^T, but works with a
    thin factor directly.
    """
    M = as_matrix(M, "M")
    return M @ msgn_exact(M.T @ as_matrix(G, "G") @ ZZT_inv)


@dataclass
class DiagSigma:
    """Diagonal displacement-factor estimate from applied-direction row norms."""

    u: np.ndarray
    lam: float = 0.5
    beta: float = 0.95

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if np.any(self.u < 0.0):
            raise ValueError("u must be entrywise >= 0")
        if not (0.0 <= self.lam <= 1.0 and 0.0 <= self.beta < 1.0):
            raise ValueError("lam in [0,1] and beta in [0,1) required")

    @property
    def M(self) -> np.ndarray:
        """Diagonal factor: M^2 = diag(lam*u^2 + (1-lam)*mean(u^2))."""
        u_sq = self.u * self.u
        return np.diag(np.sqrt(self.lam * u_sq + (1.0 - self.lam) * u_sq.mean()))


def diag_sigma_update(state: DiagSigma, Q_applied) -> DiagSigma:
    """EWMA the row l2 norms of the applied direction into the estimate."""
    Q = as_matrix(Q_applied, "Q_applied")
    if Q.shape[0] != state.u.shape[0]:
        raise ValueError("row count mismatch")
    rows = np.linalg.norm(Q, axis=1)
    return DiagSigma(
        u=state.beta * state.u + (1.0 - state.beta) * rows,
        lam=state.lam,
        beta=state.beta,
    )


def lr_schedule(
    step: int, total: int, warmup: int, min_ratio: float, base_lr: float
) -> float:
    """Linear warmup to base_lr, then cosine decay to min_ratio * base_lr."""
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    if warmup > 0 and step <= warmup:
        return base_lr * step / warmup
    span = max(total - warmup, 1)
    cos = 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / span))
    return base_lr * (min_ratio + (1.0 - min_ratio) * cos)
