"""Spectral density of sign-direction fluctuations via the fixed point."""
import math

import numpy as np
import pytest

from newton_muon.rmt import (
    SpectrumSpec,
    StieltjesSolution,
    gd_theory_score,
    muon_theory_score,
    newton_theory_score,
    stieltjes_solve,
)


def test_identity_curvature_gives_quarter_circle_moment():
    for lam in (0.3, 1.0, 2.5):
        sol = stieltjes_solve(np.full(64, lam))
        ref = 8.0 / (3.0 * math.pi) * lam
        assert sol.mu_half == pytest.approx(ref, rel=5e-3)


def test_density_nonnegative_and_narrow_spectrum_mass():
    # the default grid resolves narrow spectra to unit mass; wide spectra
    # pile an integrable spike near zero that needs cdf() normalization
    sol = stieltjes_solve(np.full(48, 0.7))
    assert isinstance(sol, StieltjesSolution)
    assert np.all(sol.density >= 0)
    assert np.trapezoid(sol.density, sol.grid_x) == pytest.approx(1.0, abs=0.03)
    wide = stieltjes_solve(SpectrumSpec(m=48, lambda_max=1.0, lambda_min=1e-3, p=0.5))
    assert np.all(wide.density >= 0)


def test_cdf_is_monotone():
    spec = SpectrumSpec(m=32, lambda_max=1.0, lambda_min=1e-2, p=0.3)
    sol = stieltjes_solve(spec)
    x, F = sol.cdf()
    assert np.all(np.diff(F) >= -1e-12)
    assert F[-1] == pytest.approx(1.0, abs=0.03)
    assert x.shape == F.shape


def test_spectrum_spec_validation():
    with pytest.raises(ValueError):
        SpectrumSpec(m=0)
    with pytest.raises(ValueError):
        SpectrumSpec(m=4, lambda_min=2.0, lambda_max=1.0)
    with pytest.raises(ValueError):
        SpectrumSpec(m=4, p=0.0)
    one = SpectrumSpec(m=1, lambda_max=3.0, lambda_min=3.0)
    np.testing.assert_array_equal(one.values, [3.0])


def test_theory_scores_closed_forms():
    lam = np.array([2.0, 1.0, 0.5])
    n = 7
    assert newton_theory_score(lam, n) == pytest.approx(n * lam.sum())
    assert gd_theory_score(lam, n) == pytest.approx(
        n * (lam**2).sum() ** 2 / (lam**3).sum()
    )


def test_isotropic_muon_theory_matches_closed_form():
    # lambda I spectrum: m^3 mu_half^2 / tr(H) = (64 / (9 pi^2)) m^2 lambda
    m, lam = 96, 0.8
    pred = muon_theory_score(np.full(m, lam))
    closed = 64.0 / (9.0 * math.pi**2) * m * m * lam
    assert pred == pytest.approx(closed, rel=2e-2)


def test_muon_theory_tracks_monte_carlo_mean():
    # random displacements on an identity activation moment
    from newton_muon.score import make_triplet_from_moment, score_muon_closed

    m = 64
    spec = SpectrumSpec(m=m, lambda_max=1.0, lambda_min=1e-2, p=0.5)
    H = np.diag(spec.values)
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(48):
        D = rng.standard_normal((m, m))
        vals.append(score_muon_closed(make_triplet_from_moment(H, D, np.eye(m))))
    mc = float(np.mean(vals))
    assert muon_theory_score(spec) == pytest.approx(mc, rel=0.08)


def test_solver_accepts_raw_arrays_and_specs():
    a = stieltjes_solve(np.full(16, 0.5)).mu_half
    b = stieltjes_solve(SpectrumSpec(m=16, lambda_max=0.5, lambda_min=0.5)).mu_half
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ValueError):
        stieltjes_solve(np.zeros((2, 2)))
