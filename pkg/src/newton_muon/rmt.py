"""Spectral-limit predictions for the orthogonalized-update score.

The singular value density of S = H D D^T H / m for Gaussian D follows from
the self-consistent Stieltjes transform

    m_S(z) = -(1/z) * (1/m) * sum_k 1 / (1 + lambda_k^2 m_S(z)),

solved pointwise on a real grid shifted by a small imaginary offset. The
density comes from the standard inversion formula rho(x) = Im m_S(x+i eta)/pi,
and the half-moment mu_half = int sqrt(x) rho(x) dx feeds the theory value of
the orthogonalized-direction score.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels

DEFAULT_ETA = 1e-4
DEFAULT_GRID_POINTS = 4000
DEFAULT_DAMPING = 0.5
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class SpectrumSpec:
    """Stretched-exponential curvature spectrum."""

    m: int
    lambda_max: float = 1.0
    lambda_min: float = 1e-4
    p: float = 0.3
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not (0.0 < self.lambda_min <= self.lambda_max):
            raise ValueError("need 0 < lambda_min <= lambda_max")
        if self.p <= 0.0:
            raise ValueError("p must be > 0")
        if self.m == 1:
            vals = np.array([self.lambda_max])
        else:
            k = np.arange(self.m, dtype=float)
            tau = np.log(self.lambda_max / self.lambda_min) / (self.m - 1) ** self.p
            vals = self.lambda_max * np.exp(-tau * k**self.p)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class StieltjesSolution:
    grid_x: np.ndarray
    density: np.ndarray
    eta: float
    mu_half: float

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalized cumulative distribution on the grid (for KS checks)."""
        dx = np.diff(self.grid_x)
        increments = 0.5 * (self.density[1:] + self.density[:-1]) * dx
        F = np.concatenate([[0.0], np.cumsum(increments)])
        return self.grid_x, F / F[-1]


def _as_spectrum(spectrum) -> np.ndarray:
    lam = np.asarray(getattr(spectrum, "values", spectrum), dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("spectrum must be a nonempty 1-D array")
    if not np.all(lam > 0.0):
        raise ValueError("spectrum must be strictly positive")
    return lam


def stieltjes_solve(
    spectrum,
    grid=None,
    eta: float = DEFAULT_ETA,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> StieltjesSolution:
    """Solve the fixed point on a grid and integrate the inverted density.

    The grid must cover [0, 4*max(lambda)^2]; the default is 4000 uniform
    points on exactly that interval. The solver is a damped Picard iteration
    warm-started from the previous grid point; it raises FixedPointDiverged
    if any point fails to reach |delta m| <= tol within max_iter rounds.
    """
    lam = _as_spectrum(spectrum)
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    x_edge = 4.0 * float(lam.max()) ** 2
    if grid is None:
        grid = np.linspace(0.0, x_edge, DEFAULT_GRID_POINTS)
    grid = np.ascontiguousarray(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    if grid[0] > 1e-12 * x_edge or grid[-1] < x_edge * (1.0 - 1e-12):
        raise ValueError(f"grid must cover [0, {x_edge}] (4 * max(lambda)^2)")
    m_vals = kernels.stieltjes_grid(
        np.ascontiguousarray(lam * lam), grid, eta, damping, tol, max_iter
    )
    density = np.maximum(np.imag(m_vals) / np.pi, 0.0)
    mu_half = float(np.trapezoid(np.sqrt(grid) * density, grid))
    return StieltjesSolution(grid_x=grid, density=density, eta=eta, mu_half=mu_half)


def muon_theory_score(spectrum, **solver_kwargs) -> float:
    """Large-m prediction m^3 mu_half^2 / tr(H) of the orthogonalized score."""
    lam = _as_spectrum(spectrum)
    sol = stieltjes_solve(lam, **solver_kwargs)
    m = lam.size
    return m**3 * sol.mu_half**2 / float(lam.sum())


def newton_theory_score(spectrum, n: int) -> float:
    """Expected Newton-direction score over Gaussian displacements: n tr(H)."""
    lam = _as_spectrum(spectrum)
    return float(n * lam.sum())


def gd_theory_score(spectrum, n: int) -> float:
    """Spectrum-level approximation of the gradient-direction score."""
    lam = _as_spectrum(spectrum)
    return float(n * (lam**2).sum() ** 2 / (lam**3).sum())
