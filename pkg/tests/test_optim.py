"""Update-rule contracts for GD, Muon, Newton-Muon, AdamW, and the schedule."""
import math

import numpy as np
import pytest

from newton_muon.linalg import cholesky_inverse, psd_sqrt, syrk
from newton_muon.optim import (
    AdamWState,
    DiagSigma,
    MatrixOptState,
    adamw_direction,
    adamw_step,
    diag_sigma_update,
    factorized_sigma_direction,
    gd_step,
    lr_schedule,
    muon_step,
    newton_muon_step,
    sign_direction,
)
from newton_muon.precond import SecondMomentState
from newton_muon.sign import msgn_exact


def test_gd_step_formula():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((4, 5))
    G = rng.standard_normal((4, 5))
    np.testing.assert_allclose(gd_step(W, G, 0.3), W - 0.3 * G, atol=0)


def test_muon_step_momentum_and_decay_replay():
    rng = np.random.default_rng(1)
    W = rng.standard_normal((5, 6))
    state = MatrixOptState(momentum=np.zeros((5, 6)), lr=0.1, mu=0.8, weight_decay=0.01)
    buf = np.zeros((5, 6))
    for _ in range(4):
        G = rng.standard_normal((5, 6))
        W_new = muon_step(state, W, G)
        buf = 0.8 * buf + G
        expected = (1.0 - 0.1 * 0.01) * W - 0.1 * msgn_exact(buf)
        np.testing.assert_allclose(W_new, expected, atol=1e-13)
        np.testing.assert_allclose(state.momentum, buf, atol=1e-13)
        W = W_new


def test_newton_muon_preconditions_before_momentum():
    rng = np.random.default_rng(2)
    W = rng.standard_normal((4, 6))
    state = MatrixOptState(momentum=np.zeros((4, 6)), lr=0.2, mu=0.9)
    precond = SecondMomentState(dim=6, refresh_k=1)
    Z = rng.standard_normal((6, 18))
    buf = np.zeros((4, 6))
    for step in range(3):
        G = rng.standard_normal((4, 6))
        W_new = newton_muon_step(state, precond, W, G, Z, step)
        buf = 0.9 * buf + G @ precond.K_inv[0]  # raw gradient preconditioned
        np.testing.assert_allclose(state.momentum, buf, atol=1e-12)
        np.testing.assert_allclose(W_new, W - 0.2 * msgn_exact(buf), atol=1e-12)
        W = W_new


def test_newton_muon_reduces_to_muon_without_momentum():
    # before any refresh the cached inverse is a positive multiple of the
    # identity, and msgn ignores positive scaling
    rng = np.random.default_rng(3)
    W = rng.standard_normal((3, 5))
    G = rng.standard_normal((3, 5))
    s1 = MatrixOptState(momentum=np.zeros((3, 5)), lr=0.1, mu=0.0)
    s2 = MatrixOptState(momentum=np.zeros((3, 5)), lr=0.1, mu=0.0)
    precond = SecondMomentState(dim=5, refresh_k=100)
    W_nm = newton_muon_step(s1, precond, W, G, rng.standard_normal((5, 8)), 0)
    W_mu = muon_step(s2, W, G)
    np.testing.assert_allclose(W_nm, W_mu, atol=1e-12)


def test_adamw_direction_replay():
    rng = np.random.default_rng(4)
    state = AdamWState(m=np.zeros((3, 4)), v=np.zeros((3, 4)), lr=0.01)
    m = np.zeros((3, 4))
    v = np.zeros((3, 4))
    for t in range(1, 4):
        G = rng.standard_normal((3, 4))
        out = adamw_direction(state, G)
        m = 0.9 * m + 0.1 * G
        v = 0.999 * v + 0.001 * G * G
        expected = (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(out, expected, atol=1e-13)


def test_adamw_step_decoupled_decay():
    rng = np.random.default_rng(5)
    W = rng.standard_normal((3, 3))
    G = rng.standard_normal((3, 3))
    s1 = AdamWState(m=np.zeros((3, 3)), v=np.zeros((3, 3)), lr=0.1, weight_decay=0.5)
    s2 = AdamWState(m=np.zeros((3, 3)), v=np.zeros((3, 3)), lr=0.1, weight_decay=0.0)
    W1 = adamw_step(s1, W, G)
    W2 = adamw_step(s2, W, G)
    np.testing.assert_allclose(W1 - W2, -0.1 * 0.5 * W, atol=1e-13)


def test_sign_direction_backends():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((8, 10))
    svd = sign_direction(A, "svd")
    ns5 = sign_direction(A, "ns5")
    np.testing.assert_allclose(svd, msgn_exact(A), atol=0)
    assert np.linalg.norm(ns5 - svd, 2) < 0.35
    with pytest.raises(ValueError):
        sign_direction(A, "cayley")


def test_sign_direction_zero_matrix():
    for backend in ("svd", "ns5"):
        np.testing.assert_array_equal(
            sign_direction(np.zeros((3, 4)), backend), np.zeros((3, 4))
        )


def test_state_validation():
    with pytest.raises(ValueError):
        MatrixOptState(momentum=np.zeros((2, 2)), lr=-0.1)
    with pytest.raises(ValueError):
        MatrixOptState(momentum=np.zeros((2, 2)), lr=0.1, mu=1.0)
    MatrixOptState(momentum=np.zeros((2, 2)), lr=0.0)  # zero lr is legal


def test_factorized_direction_recovers_displacement():
    # with M from the true displacement second moment, the factorized form
    # reproduces the displacement itself on exact-gradient instances
    rng = np.random.default_rng(7)
    m, n, N = 5, 8, 12
    D = rng.standard_normal((m, n))
    H = syrk(rng.standard_normal((m, m + 1)) / math.sqrt(m)) + 0.1 * np.eye(m)
    Z = rng.standard_normal((n, N))
    ZZT = syrk(Z)
    G = H @ D @ ZZT
    M = psd_sqrt(syrk(D))
    out = factorized_sigma_direction(M, G, cholesky_inverse(ZZT))
    np.testing.assert_allclose(out, D, atol=1e-9)


def test_diag_sigma_update_and_factor():
    state = DiagSigma(u=np.array([1.0, 2.0]), lam=0.5, beta=0.5)
    Q = np.array([[3.0, 4.0], [0.0, 0.0]])  # row norms 5 and 0
    new = diag_sigma_update(state, Q)
    np.testing.assert_allclose(new.u, [0.5 * 1 + 0.5 * 5, 0.5 * 2 + 0.5 * 0])
    u_sq = new.u**2
    expected = np.sqrt(0.5 * u_sq + 0.5 * u_sq.mean())
    np.testing.assert_allclose(np.diag(new.M), expected, atol=1e-14)


def test_lr_schedule_shape():
    base, total, warmup, floor = 0.8, 100, 20, 0.05
    assert lr_schedule(0, total, warmup, floor, base) == 0.0
    assert lr_schedule(10, total, warmup, floor, base) == pytest.approx(0.4)
    assert lr_schedule(warmup, total, warmup, floor, base) == pytest.approx(base)
    assert lr_schedule(total, total, warmup, floor, base) == pytest.approx(floor * base)
    vals = [lr_schedule(t, total, warmup, floor, base) for t in range(warmup, total + 1)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        lr_schedule(101, total, warmup, floor, base)
