"""Single-spike dynamics: recursions, greedy steps, bounds, dense oracle."""
import math

import numpy as np
import pytest

import newton_muon.spike as spike
from newton_muon.errors import DecompositionViolated
from newton_muon.spike import (
    METHODS,
    SpikeState,
    contraction_factor,
    greedy_eta,
    iterations_to_eps,
    make_spike_model,
    matrix_simulate,
    scalar_step,
    trajectory_csv,
)


def test_model_spectrum_and_frames():
    rng = np.random.default_rng(0)
    model = make_spike_model(12, 13, 4, 32.0, rng)
    w = np.sort(np.linalg.eigvalsh(model.ZZT))
    np.testing.assert_allclose(w[-1], 32.0, atol=1e-10)
    np.testing.assert_allclose(w[:-1], 1.0, atol=1e-10)
    np.testing.assert_allclose(model.U.T @ model.U, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(model.B.T @ model.B, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(model.B.T @ model.e1, 0.0, atol=1e-12)
    assert 0.3 <= abs(model.alpha0) <= 1.0
    assert all(0.3 <= abs(b) <= 1.0 for b in model.betas0)


def test_model_rejects_bad_shapes():
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        make_spike_model(4, 5, 5, 8.0, rng)  # r > m
    with pytest.raises(ValueError):
        make_spike_model(6, 5, 5, 8.0, rng)  # r > n - 1
    with pytest.raises(ValueError):
        make_spike_model(6, 7, 2, 1.0, rng)  # kappa not > 1


def test_gd_recursion_is_linear():
    s = SpikeState(alpha1=0.5, betas=(0.4, -0.3), t=0)
    out = scalar_step("gd", s, 8.0, 0.1)
    assert out.alpha1 == pytest.approx(0.5 * (1 - 0.8))
    assert out.betas[0] == pytest.approx(0.4 * 0.9)
    assert out.betas[1] == pytest.approx(-0.3 * 0.9)
    assert out.t == 1


def test_muon_recursion_couples_mode_one():
    s = SpikeState(alpha1=0.5, betas=(0.4, -0.3), t=0)
    kappa, eta = 8.0, 0.05
    out = scalar_step("muon", s, kappa, eta)
    norm = math.hypot(kappa * 0.5, 0.4)
    assert out.alpha1 == pytest.approx(0.5 - eta * kappa * 0.5 / norm)
    assert out.betas[0] == pytest.approx(0.4 - eta * 0.4 / norm)
    assert out.betas[1] == pytest.approx(-0.3 + eta)  # unit-size sign step


def test_newton_muon_recursion_is_kappa_free():
    s = SpikeState(alpha1=0.5, betas=(0.4, -0.3), t=0)
    out_a = scalar_step("newton-muon", s, 4.0, 0.05)
    out_b = scalar_step("newton-muon", s, 4096.0, 0.05)
    assert out_a == out_b
    norm = math.hypot(0.5, 0.4)
    assert out_a.alpha1 == pytest.approx(0.5 * (1 - 0.05 / norm))


def test_sign_conventions_at_origin():
    s = SpikeState(alpha1=0.0, betas=(0.0, 0.2), t=0)
    for method in ("muon", "newton-muon"):
        out = scalar_step(method, s, 8.0, 0.1)
        assert out.alpha1 == 0.0 and out.betas[0] == 0.0
        assert out.betas[1] == pytest.approx(0.1)
    out = scalar_step("muon", SpikeState(0.1, (0.2, 0.0)), 8.0, 0.05)
    assert out.betas[1] == 0.0  # sign of 0 is 0


def test_greedy_eta_formulas():
    kappa = 16.0
    assert greedy_eta("gd", 0.7, kappa) == pytest.approx(2.0 / 17.0)
    root = math.sqrt(kappa**2 + 1)
    assert greedy_eta("muon", 0.7, kappa) == pytest.approx(0.7 * root / (root + 1))
    assert greedy_eta("newton-muon", 0.7, kappa) == pytest.approx(0.7 * (2 - math.sqrt(2)))
    with pytest.raises(ValueError):
        greedy_eta("gd", 0.0, kappa)


def test_contraction_factors_bound_one_greedy_step():
    # one greedy step from the worst-case corner contracts r_max by the
    # advertised factor
    for method in METHODS:
        for kappa in (4.0, 64.0):
            r0 = 1.0
            s = SpikeState(alpha1=r0, betas=(r0,), t=0)
            eta = greedy_eta(method, r0, kappa)
            out = scalar_step(method, s, kappa, eta)
            rho = contraction_factor(method, kappa)
            assert out.r_max <= rho * r0 + 1e-12


def test_iteration_counts_match_contraction():
    for method in METHODS:
        for kappa in (4.0, 64.0):
            rho = contraction_factor(method, kappa)
            expected = math.ceil(math.log(1e-3) / math.log(rho))
            assert iterations_to_eps(method, 1.0, 1e-3, kappa) == expected


def test_gd_factor_two_contraction_count():
    # kappa = 3 gives (kappa-1)/(kappa+1) = 1/2, so 1e3 shrinks in 10 steps
    assert iterations_to_eps("gd", 1.0, 1e-3, 3.0) == 10


def test_preconditioned_count_is_kappa_free():
    counts = {iterations_to_eps("newton-muon", 1.0, 1e-3, k) for k in (4, 16, 64, 256)}
    assert len(counts) == 1


def test_matrix_matches_scalar_under_constant_eta():
    rng = np.random.default_rng(2)
    for kappa in (4.0, 64.0):
        model = make_spike_model(16, 17, 3, kappa, rng)
        for method in METHODS:
            rule = "greedy" if method == "gd" else 0.15
            traj = matrix_simulate(model, method, 40, eta_rule=rule)
            s = model.initial_state()
            for t, eta in enumerate(traj.etas):
                s = scalar_step(method, s, kappa, eta)
                ref = traj.states[t + 1]
                assert abs(s.alpha1 - ref.alpha1) < 1e-9
                assert max(abs(a - b) for a, b in zip(s.betas, ref.betas)) < 1e-9


def test_matrix_residuals_stay_at_rounding_scale():
    rng = np.random.default_rng(3)
    model = make_spike_model(16, 17, 3, 64.0, rng)
    traj = matrix_simulate(model, "newton-muon", 20)
    assert max(traj.residuals) < 1e-10


def test_greedy_matrix_run_reaches_bound_eps():
    rng = np.random.default_rng(4)
    model = make_spike_model(16, 17, 3, 16.0, rng)
    for method in METHODS:
        bound = iterations_to_eps(method, model.initial_state().r_max, 1e-3, 16.0)
        traj = matrix_simulate(model, method, bound + 5)
        hits = [t for t, s in enumerate(traj.states) if s.r_max <= 1e-3]
        assert hits and hits[0] <= bound


def test_callable_eta_rule():
    rng = np.random.default_rng(5)
    model = make_spike_model(8, 9, 2, 8.0, rng)
    etas_seen = []

    def rule(t, state):
        etas_seen.append(t)
        return 0.1 / (1 + t)

    traj = matrix_simulate(model, "gd", 5, eta_rule=rule)
    assert traj.etas == [0.1 / (1 + t) for t in range(5)]
    assert etas_seen == list(range(5))


def test_drift_gate_reports_step_index(monkeypatch):
    rng = np.random.default_rng(6)
    model = make_spike_model(12, 13, 3, 64.0, rng)
    monkeypatch.setattr(spike, "RESIDUAL_REL_TOL", 1e-18)
    with pytest.raises(DecompositionViolated, match=r"step \d+"):
        matrix_simulate(model, "muon", 30)


def test_trajectory_csv_shape_and_determinism():
    rng = np.random.default_rng(7)
    model = make_spike_model(8, 9, 2, 8.0, rng)
    a = trajectory_csv(matrix_simulate(model, "newton-muon", 6))
    b = trajectory_csv(matrix_simulate(model, "newton-muon", 6))
    assert a == b
    lines = a.strip().split("\n")
    assert len(lines) == 8  # header + states 0..6
    assert lines[0] == "step,method,kappa,alpha1,beta_1,beta_2,frobenius_residual"
