"""Certified polynomial inverse plans and their grid verifier."""
import numpy as np
import pytest

from newton_muon.errors import MarginTooSmall, PlanViolation
from newton_muon.linalg import cholesky_inverse, spec_norm_upper, syrk
from newton_muon.polyinv import PLANS, PolyPlan, poly_inverse, select_plan, verify_plan


def spd_with_margin(n, plan, rng, slack=1.10):
    """Random SPD K and a ridge whose scaled margin clears plan.epsilon."""
    lam = rng.uniform(0.0, 1.0, n)
    lam[0] = 1.0
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    K = (Q * lam) @ Q.T
    K = 0.5 * (K + K.T)
    gamma = slack * plan.epsilon * float(lam.max()) / (1.0 - plan.epsilon)
    return K, gamma


def test_all_stored_plans_verify():
    for plan in PLANS:
        assert verify_plan(plan) <= plan.s_out + 5e-7


def test_published_certificates():
    table = {(p.epsilon, p.total_sypp): p.s_out for p in PLANS}
    assert table[(0.0015, 12)] == pytest.approx(0.030717, abs=5e-7)
    assert table[(0.0015, 13)] == pytest.approx(0.004865, abs=5e-7)
    assert table[(0.006, 10)] == pytest.approx(0.002087, abs=5e-7)
    assert table[(0.025, 7)] == pytest.approx(0.008458, abs=5e-7)


def test_plan_round_trip_json():
    for plan in PLANS:
        assert PolyPlan.from_json(plan.to_json()) == plan
        assert PolyPlan.from_dict(plan.to_dict()) == plan


def test_corrupted_plan_fails_verification():
    doc = PLANS[2].to_dict()
    doc["steps"][0]["coeffs"][0] *= 1.02
    with pytest.raises(PlanViolation):
        verify_plan(PolyPlan.from_dict(doc))


def test_select_plan_takes_loosest_adequate_epsilon():
    plan = select_plan(0.01)
    assert plan.epsilon == 0.006
    # cheapest work level at that epsilon is preferred only when budgeted
    assert plan.s_out == min(p.s_out for p in PLANS if p.epsilon == 0.006)


def test_select_plan_respects_budget():
    plan = select_plan(0.01, budget=9)
    assert plan.epsilon == 0.006 and plan.total_sypp <= 9


def test_select_plan_margin_too_small():
    with pytest.raises(MarginTooSmall):
        select_plan(1e-4)


def test_poly_inverse_residual_within_certificate():
    rng = np.random.default_rng(0)
    for plan in PLANS[::3]:
        K, gamma = spd_with_margin(20, plan, rng)
        X = poly_inverse(K, gamma, plan=plan)
        R = np.eye(20) - (K + gamma * np.eye(20)) @ X
        assert np.linalg.norm(R, 2) <= plan.s_out


def test_poly_inverse_tracks_cholesky():
    rng = np.random.default_rng(1)
    plan = PLANS[1]
    K, gamma = spd_with_margin(16, plan, rng)
    X = poly_inverse(K, gamma, plan=plan)
    X_ref = cholesky_inverse(K + gamma * np.eye(16))
    gap = np.linalg.norm(X - X_ref, 2)
    assert gap <= 2.0 * plan.s_out * np.linalg.norm(X_ref, 2)


def test_poly_inverse_auto_plan_and_budget():
    rng = np.random.default_rng(2)
    K = syrk(rng.standard_normal((12, 15)) / 4.0)
    sigma = spec_norm_upper(K)
    gamma = 0.05 * sigma
    X = poly_inverse(K, gamma)
    R = np.eye(12) - (K + gamma * np.eye(12)) @ X
    margin = gamma / (sigma + gamma)
    expected = select_plan(margin)
    assert np.linalg.norm(R, 2) <= expected.s_out
    X_b = poly_inverse(K, gamma, budget=expected.total_sypp)
    np.testing.assert_allclose(X_b, X, atol=1e-12)


def test_poly_inverse_explicit_plan_needs_margin():
    rng = np.random.default_rng(3)
    tight = max(PLANS, key=lambda p: p.epsilon)  # epsilon = 0.025
    K = syrk(rng.standard_normal((10, 12)))
    gamma = 1e-4 * spec_norm_upper(K)  # margin far below 0.025
    with pytest.raises(MarginTooSmall):
        poly_inverse(K, gamma, plan=tight)


def test_plan_steps_accounting():
    for plan in PLANS:
        assert sum(step.sypp_cost for step in plan.steps) == plan.total_sypp
        assert plan.s_out > 0 and 0 < plan.epsilon < 1
