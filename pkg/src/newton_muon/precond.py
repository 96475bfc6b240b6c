"""Per-layer activation second-moment tracking and right-preconditioning.

The state keeps an EWMA of ZZ^T/N per layer (optionally split into
contiguous diagonal blocks along the input dimension), refreshed every
refresh_k steps together with a cached ridged inverse. Between refreshes the
cached inverse is reused unchanged; gradients are right-multiplied by it
before entering the momentum/sign pipeline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import MarginTooSmall, NotPositiveDefinite
from .linalg import as_matrix, as_sym_matrix, cholesky_inverse, sym_eig, syrk
from .polyinv import poly_inverse

INIT_SCALE = 1e-3
RIDGE_RETRIES = 6


@dataclass
class SecondMomentState:
    """Running activation second moment with its cached ridged inverse.

    K and K_inv hold one matrix per diagonal block (a single entry in full
    mode). The inverse is exactly the one computed at the most recent
    refresh; staleness is at most refresh_k steps.
    """

    dim: int
    beta: float = 0.95
    gamma: float = 0.2
    refresh_k: int = 32
    blocks: int = 1
    inverse_backend: str = "cholesky"
    K: list[np.ndarray] = field(default_factory=list)
    K_inv: list[np.ndarray] = field(default_factory=list)
    gamma_l: float = 0.0

    def __post_init__(self):
        if self.dim < 1 or self.blocks < 1 or self.dim % self.blocks != 0:
            raise ValueError("blocks must divide dim")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")
        if self.refresh_k < 1:
            raise ValueError("refresh_k must be >= 1")
        if self.inverse_backend not in ("cholesky", "poly"):
            raise ValueError(f"unknown inverse backend {self.inverse_backend!r}")
        nb = self.dim // self.blocks
        if not self.K:
            self.K = [INIT_SCALE * np.eye(nb) for _ in range(self.blocks)]
        if not self.K_inv:
            # The inverse the refresh rule would assign to the initial K; any
            # positive multiple of I leaves the sign-based update unchanged.
            inv0 = 1.0 / (INIT_SCALE * (1.0 + self.gamma))
            self.K_inv = [inv0 * np.eye(nb) for _ in range(self.blocks)]
            self.gamma_l = self.gamma * INIT_SCALE

    @property
    def block_dim(self) -> int:
        return self.dim // self.blocks


def _ridged_inverse(K: np.ndarray, gamma_l: float, backend: str) -> np.ndarray:
    """Invert K + gamma_l I, escalating the ridge x10 on numerical failure."""
    n = K.shape[0]
    base = gamma_l if gamma_l > 0.0 else 1e-12 * max(float(np.trace(K)) / n, 1.0)
    last_exc = None
    for attempt in range(RIDGE_RETRIES + 1):
        ridge = base * 10.0**attempt
        try:
            if backend == "poly":
                return poly_inverse(K, ridge)
            return cholesky_inverse(K + ridge * np.eye(n))
        except (NotPositiveDefinite, MarginTooSmall) as exc:
            last_exc = exc
    raise NotPositiveDefinite(
        f"inverse failed after {RIDGE_RETRIES} ridge escalations from {base:.3e}"
    ) from last_exc


def maybe_refresh(state: SecondMomentState, Z, step: int) -> SecondMomentState:
    """EWMA-update K and recompute its inverse when (step+1) % refresh_k == 0.

    Off-cadence steps and empty batches return the state untouched. Z is the
    full n x N activation matrix; block mode splits its rows into contiguous
    blocks. The state is modified in place and returned.
    """
    Z = as_matrix(Z, "Z")
    if Z.shape[0] != state.dim:
        raise ValueError(f"Z has {Z.shape[0]} rows, state dim is {state.dim}")
    N = Z.shape[1]
    if N == 0 or (step + 1) % state.refresh_k != 0:
        return state
    nb = state.block_dim
    for b in range(state.blocks):
        Zb = np.ascontiguousarray(Z[b * nb : (b + 1) * nb, :])
        state.K[b] = state.beta * state.K[b] + (1.0 - state.beta) / N * syrk(Zb)
    # Global trace keeps block mode identical to full mode on block-diagonal K.
    trace = sum(float(np.trace(Kb)) for Kb in state.K)
    state.gamma_l = state.gamma * trace / state.dim
    state.K_inv = [
        _ridged_inverse(Kb, state.gamma_l, state.inverse_backend) for Kb in state.K
    ]
    return state


def apply_right_precond(state: SecondMomentState, G) -> np.ndarray:
    """Right-multiply a gradient by the cached inverse, blockwise."""
    G = as_matrix(G, "G")
    if G.shape[1] != state.dim:
        raise ValueError(f"G has {G.shape[1]} columns, state dim is {state.dim}")
    if state.blocks == 1:
        return G @ state.K_inv[0]
    nb = state.block_dim
    return np.hstack(
        [G[:, b * nb : (b + 1) * nb] @ state.K_inv[b] for b in range(state.blocks)]
    )


class MomentDiagnostics(NamedTuple):
    d_min: float
    d_mean: float
    d_max: float
    off_mean: float  # (1/n) * sum_{i != j} |K_ij|
    cond: float  # lambda_max / lambda_min, +inf when lambda_min <= 0


def diagnostics(K) -> MomentDiagnostics:
    """Second-moment health statistics: diagonal range, off-diagonal mass, condition."""
    K = as_sym_matrix(K, "K")
    n = K.shape[0]
    d = np.diagonal(K)
    abs_K = np.abs(K)
    off_mean = float((abs_K.sum() - np.abs(d).sum()) / n)
    w, _ = sym_eig(K)
    cond = float("inf") if w[-1] <= 0.0 else float(w[0] / w[-1])
    return MomentDiagnostics(
        d_min=float(d.min()),
        d_mean=float(d.mean()),
        d_max=float(d.max()),
        off_mean=off_mean,
        cond=cond,
    )


def state_to_json(state: SecondMomentState) -> str:
    """Snapshot the state as JSON with row-major matrix payloads."""
    return json.dumps(
        {
            "dim": state.dim,
            "beta": state.beta,
            "gamma": state.gamma,
            "refresh_k": state.refresh_k,
            "blocks": state.blocks,
            "inverse_backend": state.inverse_backend,
            "gamma_l": state.gamma_l,
            "K": [Kb.ravel().tolist() for Kb in state.K],
            "K_inv": [Mb.ravel().tolist() for Mb in state.K_inv],
        }
    )


def state_from_json(text: str) -> SecondMomentState:
    d = json.loads(text)
    nb = d["dim"] // d["blocks"]
    return SecondMomentState(
        dim=d["dim"],
        beta=d["beta"],
        gamma=d["gamma"],
        refresh_k=d["refresh_k"],
        blocks=d["blocks"],
        inverse_backend=d["inverse_backend"],
        K=[np.array(x).reshape(nb, nb) for x in d["K"]],
        K_inv=[np.array(x).reshape(nb, nb) for x in d["K_inv"]],
        gamma_l=d["gamma_l"],
    )
