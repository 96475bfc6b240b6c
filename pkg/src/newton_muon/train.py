"""Desk-scale trainers: a spiked quadratic benchmark and a small MLP.

The quadratic mode minimizes f(W) = 0.5 * ||(W - W_star) Z||_F^2 with a
spiked Gram ZZ^T (one eigenvalue kappa, the rest 1), comparing update rules
under their greedy step sizes: the worst-case-optimal step from the
one-step analysis, evaluated on the known spectrum and the spectral norm of
the current displacement. The MLP mode trains a bias-free network from
mlp.py with the production per-layer optimizer states and the warmup+cosine
schedule. Both log one CSV row per step; loss blowing past 1e6x its initial
value aborts the run.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import mlp as mlp_mod
from .errors import TrainingDiverged
from .linalg import syrk
from .optim import (
    AdamWState,
    MatrixOptState,
    adamw_direction,
    lr_schedule,
    sign_direction,
)
from .precond import SecondMomentState, apply_right_precond, maybe_refresh
from .score import trial_rng

DIVERGENCE_FACTOR = 1e6
QUAD_VARIANTS = ("gd", "muon-svd", "newton-muon-svd", "adamw")
MLP_VARIANTS = ("gd", "muon-svd", "newton-muon-svd", "adamw")


@dataclass(frozen=True)
class QuadraticTask:
    """Shared problem data so every optimizer starts from the same W0."""

    W_star: np.ndarray
    W0: np.ndarray
    Z: np.ndarray
    ZZT: np.ndarray
    kappa: float

    @property
    def m(self) -> int:
        return self.W_star.shape[0]

    @property
    def n(self) -> int:
        return self.W_star.shape[1]


def make_quadratic_task(
    m: int,
    n: int,
    kappa: float,
    rng: np.random.Generator,
    r0: float = 1.0,
    n_samples: int | None = None,
) -> QuadraticTask:
    """Random target plus a realized Z whose Gram has spectrum {kappa, 1..1}.

    Z = U diag(sqrt(d)) V^T with orthonormal U (n x n) and V (N x n), so
    ZZ^T = U diag(d) U^T holds to rounding and the sample second moment is
    full rank. W0 sits at Frobenius distance r0 from W_star.
    """
    if kappa <= 1.0:
        raise ValueError("kappa must be > 1")
    N = 2 * n if n_samples is None else int(n_samples)
    if N < n:
        raise ValueError("need at least n samples for a full-rank Gram")
    d = np.ones(n)
    d[0] = kappa
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((N, n)))
    Z = (U * np.sqrt(d)) @ V.T
    ZZT = (U * d) @ U.T
    ZZT = 0.5 * (ZZT + ZZT.T)
    W_star = rng.standard_normal((m, n))
    D0 = rng.standard_normal((m, n))
    D0 *= r0 / np.linalg.norm(D0)
    return QuadraticTask(W_star=W_star, W0=W_star + D0, Z=Z, ZZT=ZZT, kappa=kappa)


def line_search_lr(D: np.ndarray, ZZT: np.ndarray, Q: np.ndarray) -> float:
    """Exact line search for f = 0.5 tr(D ZZ^T D^T) along direction Q.

    argmin_eta f(D - eta Q) = tr(Q ZZ^T D^T) / tr(Q ZZ^T Q^T). Works for any
    nonzero direction; a vanishing-curvature direction gets step 0.
    """
    QZ = Q @ ZZT
    den = float(np.sum(QZ * Q))
    if den <= 0.0:
        return 0.0
    return float(np.sum(QZ * D)) / den


def greedy_lr(family: str, D: np.ndarray, kappa: float) -> float:
    """Worst-case-optimal step for the spiked quadratic, per update rule.

    GD uses the fixed minimax step 2/(kappa+1) for a Gram with spectrum
    {kappa, 1}. The sign-based rules scale with the current displacement:
    the preconditioned direction subtracts its step from every singular
    value of D, so eta = (2 - sqrt(2)) sigma_max(D) halves-ish the largest
    one per step independent of kappa, while the unpreconditioned rule
    must stay proportional to sigma_max(D)/sqrt(kappa^2+1) times kappa to
    guard the spike, leaving a 1 - O(1/kappa) contraction.
    """
    if family == "gd":
        return 2.0 / (kappa + 1.0)
    sigma = float(np.linalg.norm(D, 2))
    if family == "newton-muon":
        return (2.0 - np.sqrt(2.0)) * sigma
    if family == "muon":
        root = np.sqrt(kappa * kappa + 1.0)
        return sigma * root / (root + 1.0)
    raise ValueError(f"no greedy step rule for {family!r}")


def _variant_parts(variant: str) -> tuple[str, str]:
    """Split e.g. 'newton-muon-svd' into family and sign backend."""
    for family in ("newton-muon", "muon"):
        for backend in ("svd", "ns5"):
            if variant == f"{family}-{backend}":
                return family, backend
    if variant in ("gd", "adamw"):
        return variant, "svd"
    raise ValueError(f"unknown optimizer variant {variant!r}")


def train_quadratic(
    task: QuadraticTask,
    variant: str,
    total_steps: int = 2000,
    target: float = 1e-3,
    lr: float | str = "greedy",
    mu: float = 0.0,
    weight_decay: float = 0.0,
    ewma_beta: float = 0.95,
    ridge_gamma: float = 0.2,
    refresh_k: int = 1,
    blocks: int = 1,
    inverse_backend: str = "cholesky",
) -> tuple[list[tuple], int | None]:
    """Run one optimizer on the quadratic; stop once distance <= target.

    Returns (rows, steps_to_target). Rows are
    (optimizer, step, wall_time, loss, distance) with step 0 describing W0.
    steps_to_target is None when the cap is hit first. lr is "greedy" for
    the per-rule worst-case-optimal step, "linesearch" for per-step exact
    line search, or a constant float. AdamW has no greedy theory and falls
    back to line search in greedy mode.
    """
    family, backend = _variant_parts(variant)
    W = task.W0.copy()
    buf = np.zeros_like(W)
    precond = SecondMomentState(
        dim=task.n,
        beta=ewma_beta,
        gamma=ridge_gamma,
        refresh_k=refresh_k,
        blocks=blocks,
        inverse_backend=inverse_backend,
    )
    adam = AdamWState(m=np.zeros_like(W), v=np.zeros_like(W), lr=0.0)
    rows: list[tuple] = []
    steps_to_target: int | None = None
    t0 = time.perf_counter()
    initial_loss = None
    for step in range(total_steps + 1):
        D = W - task.W_star
        loss = 0.5 * float(np.sum((D @ task.ZZT) * D))
        dist = float(np.linalg.norm(D))
        rows.append((variant, step, time.perf_counter() - t0, loss, dist))
        if initial_loss is None:
            initial_loss = loss
        elif loss > DIVERGENCE_FACTOR * max(initial_loss, 1e-300):
            raise TrainingDiverged(
                f"{variant} diverged at step {step}: loss {loss:.3e} "
                f"exceeds 1e6 x initial {initial_loss:.3e}"
            )
        if dist <= target:
            steps_to_target = step
            break
        if step == total_steps:
            break
        G = D @ task.ZZT
        if family == "gd":
            Q = G
        elif family == "adamw":
            Q = adamw_direction(adam, G)
        else:
            G_eff = G
            if family == "newton-muon":
                maybe_refresh(precond, task.Z, step)
                G_eff = apply_right_precond(precond, G)
            buf = mu * buf + G_eff
            Q = sign_direction(buf, backend)
        if lr == "greedy":
            if family == "adamw":
                eta = line_search_lr(D, task.ZZT, Q)
            else:
                eta = greedy_lr(family, D, task.kappa)
        elif lr == "linesearch":
            eta = line_search_lr(D, task.ZZT, Q)
        else:
            eta = float(lr)
        W = (1.0 - eta * weight_decay) * W - eta * Q
    return rows, steps_to_target


def run_quadratic_suite(
    task: QuadraticTask,
    variants=("gd", "muon-svd", "newton-muon-svd"),
    **kwargs,
) -> tuple[list[tuple], dict[str, int | None]]:
    """Run several optimizers on the same task; aggregate rows and counts."""
    rows: list[tuple] = []
    counts: dict[str, int | None] = {}
    for variant in variants:
        r, n_steps = train_quadratic(task, variant, **kwargs)
        rows.extend(r)
        counts[variant] = n_steps
    return rows, counts


def train_mlp(
    spec: mlp_mod.MlpSpec,
    variant: str,
    seed: int,
    total_steps: int = 2000,
    batch: int = 128,
    base_lr: float = 0.02,
    warmup: int = 100,
    min_ratio: float = 0.1,
    mu: float = 0.95,
    weight_decay: float = 0.0,
    ewma_beta: float = 0.95,
    ridge_gamma: float = 0.2,
    refresh_k: int = 32,
    blocks: int = 1,
    inverse_backend: str = "cholesky",
) -> list[tuple]:
    """Train the MLP with one optimizer; rows are (optimizer, step, wall, loss).

    Initial weights, the teacher network, and the batch stream are all
    derived from counter-based substreams of `seed`, so every variant sees
    identical data and identical starting weights. The logged loss at step t
    is the minibatch loss before that step's update.
    """
    family, backend = _variant_parts(variant)
    params = mlp_mod.init_params(spec, trial_rng(seed, 0))
    teacher = mlp_mod.init_params(spec, trial_rng(seed, 1))
    data_rng = trial_rng(seed, 2)
    states = [
        MatrixOptState(momentum=np.zeros_like(W), lr=0.0, mu=mu, weight_decay=weight_decay)
        for W in params
    ]
    adam_states = [
        AdamWState(m=np.zeros_like(W), v=np.zeros_like(W), lr=0.0, weight_decay=weight_decay)
        for W in params
    ]
    preconds = [
        SecondMomentState(
            dim=W.shape[1],
            beta=ewma_beta,
            gamma=ridge_gamma,
            refresh_k=refresh_k,
            blocks=blocks if W.shape[1] % blocks == 0 else 1,
            inverse_backend=inverse_backend,
        )
        for W in params
    ]
    rows: list[tuple] = []
    t0 = time.perf_counter()
    initial_loss = None
    for step in range(total_steps):
        X, Y = mlp_mod.sample_batch(spec, teacher, batch, data_rng)
        loss, grads, zs = mlp_mod.forward_backward(spec, params, X, Y)
        rows.append((variant, step, time.perf_counter() - t0, loss))
        if initial_loss is None:
            initial_loss = loss
        elif loss > DIVERGENCE_FACTOR * max(initial_loss, 1e-300):
            raise TrainingDiverged(
                f"{variant} diverged at step {step}: loss {loss:.3e} "
                f"exceeds 1e6 x initial {initial_loss:.3e}"
            )
        eta = lr_schedule(step + 1, total_steps, warmup, min_ratio, base_lr)
        for i, W in enumerate(params):
            if family == "gd":
                params[i] = W - eta * grads[i]
            elif family == "adamw":
                adam_states[i].lr = eta
                Q = adamw_direction(adam_states[i], grads[i])
                params[i] = (1.0 - eta * weight_decay) * W - eta * Q
            else:
                G_eff = grads[i]
                if family == "newton-muon":
                    maybe_refresh(preconds[i], zs[i], step)
                    G_eff = apply_right_precond(preconds[i], grads[i])
                st = states[i]
                st.lr = eta
                st.momentum = st.mu * st.momentum + G_eff
                Q = sign_direction(st.momentum, backend)
                params[i] = (1.0 - eta * weight_decay) * W - eta * Q
    return rows


def train_csv(rows, with_distance: bool) -> str:
    """Serialize learning-curve rows with full-precision floats."""
    header = "optimizer,step,wall_time,loss"
    if with_distance:
        header += ",distance"
    lines = [header]
    for row in rows:
        opt, step, wall, loss = row[0], row[1], row[2], row[3]
        line = f"{opt},{step},{wall!r},{loss!r}"
        if with_distance:
            line += f",{row[4]!r}"
        lines.append(line)
    return "\n".join(lines) + "\n"
