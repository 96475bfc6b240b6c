"""Small dense MLP with hand-written backprop for the desk-scale trainer.

Layers are bias-free matrix products with a pointwise activation; adjacent
equal widths may be bridged by a residual connection. The backward pass
returns, alongside each weight gradient, the input activations Z_l that
produced it, which is exactly what the activation-second-moment
preconditioner consumes. Columns are samples throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .score import stretched_exponential_spectrum

ACTIVATIONS = ("relu", "tanh", "gelu")
LOSSES = ("mse", "cross-entropy")
DATA_KINDS = ("isotropic", "spiked", "stretched")
MAX_LAYERS = 8

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture plus task description for one synthetic training run."""

    widths: tuple[int, ...]
    activation: str = "gelu"
    residual: bool = False
    loss: str = "mse"
    data: str = "isotropic"
    data_kappa: float = 64.0
    data_p: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if len(self.widths) - 1 > MAX_LAYERS:
            raise ValueError(f"at most {MAX_LAYERS} weight layers supported")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.data not in DATA_KINDS:
            raise ValueError(f"data must be one of {DATA_KINDS}")
        if self.data_kappa <= 0.0 or self.data_p <= 0.0:
            raise ValueError("data_kappa and data_p must be > 0")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1


def _act(name: str, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Activation value and its derivative at A."""
    if name == "relu":
        mask = (A > 0.0).astype(float)
        return A * mask, mask
    if name == "tanh":
        T = np.tanh(A)
        return T, 1.0 - T * T
    # gelu, tanh form
    inner = _GELU_C * (A + 0.044715 * A**3)
    T = np.tanh(inner)
    val = 0.5 * A * (1.0 + T)
    d_inner = _GELU_C * (1.0 + 3 * 0.044715 * A * A)
    deriv = 0.5 * (1.0 + T) + 0.5 * A * (1.0 - T * T) * d_inner
    return val, deriv


def init_params(spec: MlpSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Gaussian init scaled by 1/sqrt(fan_in)."""
    return [
        rng.standard_normal((spec.widths[i + 1], spec.widths[i]))
        / math.sqrt(spec.widths[i])
        for i in range(spec.n_layers)
    ]


def input_scales(spec: MlpSpec) -> np.ndarray:
    """Per-coordinate standard deviations of the synthetic input distribution."""
    d = spec.widths[0]
    if spec.data == "isotropic":
        return np.ones(d)
    if spec.data == "spiked":
        s = np.ones(d)
        s[0] = math.sqrt(spec.data_kappa)
        return s
    return np.sqrt(stretched_exponential_spectrum(d, 1.0, 1e-4, spec.data_p))


def sample_batch(
    spec: MlpSpec, teacher: list[np.ndarray], batch: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Inputs with the configured second moment and teacher-derived targets.

    Regression targets are the teacher network's output; classification
    targets are one-hot argmax labels of the teacher logits.
    """
    X = input_scales(spec)[:, None] * rng.standard_normal((spec.widths[0], batch))
    logits, _ = forward(spec, teacher, X)
    if spec.loss == "mse":
        return X, logits
    labels = np.argmax(logits, axis=0)
    Y = np.zeros_like(logits)
    Y[labels, np.arange(batch)] = 1.0
    return X, Y


def forward(
    spec: MlpSpec, params: list[np.ndarray], X: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Network output and the captured per-layer input activations."""
    zs = []
    H = X
    for i, W in enumerate(params):
        zs.append(H)
        A = W @ H
        if i == spec.n_layers - 1:
            H = A  # linear output layer
        else:
            val, _ = _act(spec.activation, A)
            H = H + val if spec.residual and W.shape[0] == W.shape[1] else val
    return H, zs


def loss_and_grad_output(
    spec: MlpSpec, out: np.ndarray, Y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to the network output."""
    N = out.shape[1]
    if spec.loss == "mse":
        R = out - Y
        return float(0.5 * np.sum(R * R) / N), R / N
    shifted = out - out.max(axis=0, keepdims=True)
    expo = np.exp(shifted)
    P = expo / expo.sum(axis=0, keepdims=True)
    picked = np.sum(shifted * Y, axis=0) - np.log(expo.sum(axis=0))
    return float(-picked.mean()), (P - Y) / N


def forward_backward(
    spec: MlpSpec, params: list[np.ndarray], X: np.ndarray, Y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss, per-layer weight gradients, and per-layer input activations."""
    zs: list[np.ndarray] = []
    pre: list[np.ndarray | None] = []
    H = X
    for i, W in enumerate(params):
        zs.append(H)
        A = W @ H
        if i == spec.n_layers - 1:
            pre.append(None)
            H = A
        else:
            val, _ = _act(spec.activation, A)
            pre.append(A)
            H = H + val if spec.residual and W.shape[0] == W.shape[1] else val
    loss, dH = loss_and_grad_output(spec, H, Y)
    grads: list[np.ndarray | None] = [None] * spec.n_layers
    for i in reversed(range(spec.n_layers)):
        W = params[i]
        if pre[i] is None:
            dA = dH
            dH_next = W.T @ dA
        else:
            _, deriv = _act(spec.activation, pre[i])
            dA = dH * deriv
            dH_next = W.T @ dA
            if spec.residual and W.shape[0] == W.shape[1]:
                dH_next = dH_next + dH
        grads[i] = dA @ zs[i].T
        dH = dH_next
    return loss, grads, zs


def numeric_gradient(
    spec: MlpSpec,
    params: list[np.ndarray],
    X: np.ndarray,
    Y: np.ndarray,
    layer: int,
    h: float = 1e-6,
) -> np.ndarray:
    """Central finite differences on one layer, for checking the backprop."""
    W = params[layer]
    G = np.zeros_like(W)
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            orig = W[i, j]
            W[i, j] = orig + h
            lp, _ = loss_and_grad_output(spec, forward(spec, params, X)[0], Y)
            W[i, j] = orig - h
            lm, _ = loss_and_grad_output(spec, forward(spec, params, X)[0], Y)
            W[i, j] = orig
            G[i, j] = (lp - lm) / (2 * h)
    return G
