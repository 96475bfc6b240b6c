"""One-step quadratic improvement scores.

For an update W -> W - Q with curvature H on the output side and activation
second moment ZZ^T/N on the input side, the surrogate improvement of a
direction Q is

    s(Q) = tr(Q G^T)^2 / tr(H Q (ZZ^T/N) Q^T),

invariant to the scale of Q. This module evaluates s directly, provides the
closed forms for the gradient and Muon directions, runs the six-direction
comparison study on spiked Monte Carlo instances, and builds the exact and
Kronecker-factored parameter-space curvature for small problems.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDirection
from .linalg import as_matrix, as_sym_matrix, cholesky_inverse, compact_svd, syrk
from .sign import msgn_exact, newton_schulz5

DENOM_FLOOR = 1e-300
KRON_SIZE_CAP = 4096

DIRECTIONS = ("gd", "muon-svd", "muon-ns5", "newton-muon-svd", "newton-muon-ns5", "newton")


@dataclass(frozen=True)
class TripletInstance:
    """Quadratic instance (H, D, Z) with the implied gradient G = H D ZZ^T/N.

    Z may be None when the instance is built directly from a second moment
    (isotropic theory checks do this); A always holds ZZ^T/N.
    """

    H: np.ndarray
    D: np.ndarray
    N: int
    A: np.ndarray  # ZZ^T / N
    G: np.ndarray
    Z: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[0]


def make_triplet(H, D, Z) -> TripletInstance:
    """Build an instance from raw activations."""
    H = as_sym_matrix(H, "H")
    D = as_matrix(D, "D")
    Z = as_matrix(Z, "Z")
    if D.shape[0] != H.shape[0] or D.shape[1] != Z.shape[0]:
        raise ValueError("shape mismatch: need H m x m, D m x n, Z n x N")
    N = Z.shape[1]
    A = syrk(Z) / N
    return TripletInstance(H=H, D=D, N=N, A=A, G=H @ D @ A, Z=Z)


def make_triplet_from_moment(H, D, A, N: int = 1) -> TripletInstance:
    """Build an instance from a known second moment ZZ^T/N."""
    H = as_sym_matrix(H, "H")
    D = as_matrix(D, "D")
    A = as_sym_matrix(A, "A")
    if D.shape[0] != H.shape[0] or D.shape[1] != A.shape[0]:
        raise ValueError("shape mismatch: need H m x m, D m x n, A n x n")
    return TripletInstance(H=H, D=D, N=int(N), A=A, G=H @ D @ A, Z=None)


def score(Q, inst: TripletInstance) -> float:
    """Surrogate improvement of direction Q; scale-invariant in Q."""
    Q = as_matrix(Q, "Q")
    if Q.shape != inst.D.shape:
        raise ValueError(f"direction shape {Q.shape} does not match {inst.D.shape}")
    num = float(np.sum(Q * inst.G)) ** 2
    den = float(np.sum((inst.H @ Q) * (Q @ inst.A)))
    if den <= DENOM_FLOOR:
        raise DegenerateDirection(f"curvature quadratic form is {den:.3e}")
    return num / den


def score_gd_closed(inst: TripletInstance) -> float:
    """Closed form of score(G): tr(H^2 D A^2 D^T)^2 / tr(H^3 D A^3 D^T)."""
    H, D, A = inst.H, inst.D, inst.A
    HHD = H @ (H @ D)
    num = float(np.sum((HHD @ A @ A) * D)) ** 2
    den = float(np.sum((H @ HHD @ A @ A @ A) * D))
    if den <= DENOM_FLOOR:
        raise DegenerateDirection(f"curvature quadratic form is {den:.3e}")
    return num / den


def score_muon_closed(inst: TripletInstance) -> float:
    """Closed form of score(msgn(G)): |G|_*^2 / tr(U^T H U V^T A V)."""
    U, s, V = compact_svd(inst.G)
    if s.size == 0:
        raise DegenerateDirection("gradient is the zero matrix")
    num = float(np.sum(s)) ** 2
    den = float(np.sum((U.T @ inst.H @ U) * (V.T @ inst.A @ V)))
    if den <= DENOM_FLOOR:
        raise DegenerateDirection(f"curvature quadratic form is {den:.3e}")
    return num / den


class SixScores(NamedTuple):
    gd: float
    muon_svd: float
    muon_ns5: float
    newton_muon_svd: float
    newton_muon_ns5: float
    newton: float


def six_direction_scores(inst: TripletInstance) -> SixScores:
    """Scores of the six candidate directions on one instance.

    Directions: raw gradient; msgn of the gradient (exact and five-step
    Newton-Schulz); msgn of the right-preconditioned gradient (both ways);
    and the two-sided Newton direction H^-1 G (ZZ^T/N)^-1.
    """
    A_inv = cholesky_inverse(inst.A)
    H_inv = cholesky_inverse(inst.H)
    G = inst.G
    G_pre = G @ A_inv
    return SixScores(
        gd=score(G, inst),
        muon_svd=score(msgn_exact(G), inst),
        muon_ns5=score(newton_schulz5(G), inst),
        newton_muon_svd=score(msgn_exact(G_pre), inst),
        newton_muon_ns5=score(newton_schulz5(G_pre), inst),
        newton=score(H_inv @ G_pre, inst),
    )


def stretched_exponential_spectrum(
    m: int, lambda_max: float, lambda_min: float, p: float
) -> np.ndarray:
    """Descending spectrum lam_max * exp(-tau * (k-1)^p) hitting lam_min at k=m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not (0.0 < lambda_min <= lambda_max):
        raise ValueError("need 0 < lambda_min <= lambda_max")
    if p <= 0.0:
        raise ValueError("p must be > 0")
    if m == 1:
        return np.array([lambda_max])
    k = np.arange(m, dtype=float)
    tau = np.log(lambda_max / lambda_min) / (m - 1) ** p
    return lambda_max * np.exp(-tau * k**p)


def sample_study_instance(
    m: int, n: int, N: int, kappa: float, h_values, rng: np.random.Generator
) -> TripletInstance:
    """One Monte Carlo instance of the spiked comparison study.

    H is a random orthogonal conjugation of diag(h_values); activation columns
    are Gaussian with a single variance spike kappa along the first input
    coordinate; the displacement D is standard Gaussian.
    """
    h_values = np.asarray(h_values, dtype=float)
    if h_values.shape != (m,):
        raise ValueError("h_values must have length m")
    P, _ = np.linalg.qr(rng.standard_normal((m, m)))
    H = (P * h_values) @ P.T
    il, jl = np.tril_indices(m, -1)
    H[jl, il] = H[il, jl]
    Z = rng.standard_normal((n, N))
    Z[0] *= np.sqrt(kappa)
    D = rng.standard_normal((m, n))
    return make_triplet(H, D, Z)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Counter-based per-trial stream; parallel evaluation order never matters."""
    return np.random.Generator(np.random.Philox(key=[master_seed, trial]))


def run_score_study(
    m: int,
    n: int,
    N: int,
    kappa: float,
    h_values,
    trials: int,
    master_seed: int,
) -> list[tuple[int, str, float]]:
    """Per-trial scores of all six directions, ordered by trial then direction."""
    rows: list[tuple[int, str, float]] = []
    for trial in range(trials):
        rng = trial_rng(master_seed, trial)
        inst = sample_study_instance(m, n, N, kappa, h_values, rng)
        scores = six_direction_scores(inst)
        for name, value in zip(DIRECTIONS, scores):
            rows.append((trial, name, float(value)))
    return rows


def summarize_scores(rows) -> list[tuple[str, float, float, float]]:
    """Per-direction mean and 2.5%/97.5% quantiles, in canonical order."""
    by_dir: dict[str, list[float]] = {name: [] for name in DIRECTIONS}
    for _, name, value in rows:
        by_dir[name].append(value)
    out = []
    for name in DIRECTIONS:
        vals = np.asarray(by_dir[name])
        if vals.size == 0:
            raise ValueError(f"no rows for direction {name}")
        out.append(
            (
                name,
                float(vals.mean()),
                float(np.quantile(vals, 0.025)),
                float(np.quantile(vals, 0.975)),
            )
        )
    return out


def study_rows_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial", "direction", "score"])
    for trial, name, value in rows:
        writer.writerow([trial, name, repr(value)])
    return buf.getvalue()


def study_summary_csv(summary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["direction", "mean", "q025", "q975"])
    for name, mean, lo, hi in summary:
        writer.writerow([name, repr(mean), repr(lo), repr(hi)])
    return buf.getvalue()


def vec(W) -> np.ndarray:
    """Column-stacking vectorization; (A kron H) vec(Q) = vec(H Q A^T)."""
    return np.asarray(W, dtype=float).ravel(order="F")


def unvec(v, m: int, n: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((m, n), order="F")


def _check_kron_cap(m: int, n: int) -> None:
    if m * n > KRON_SIZE_CAP:
        raise ValueError(
            f"dense parameter-space curvature needs m*n <= {KRON_SIZE_CAP}, got {m * n}"
        )


def kron_hessian_exact(Z, H_blocks) -> np.ndarray:
    """Exact parameter-space curvature (1/N) sum_t (z_t z_t^T) kron H_t."""
    Z = as_matrix(Z, "Z")
    n, N = Z.shape
    if len(H_blocks) != N:
        raise ValueError("need one curvature block per activation column")
    m = as_sym_matrix(H_blocks[0], "H_blocks[0]").shape[0]
    _check_kron_cap(m, n)
    out = np.zeros((m * n, m * n))
    for t in range(N):
        Ht = as_sym_matrix(H_blocks[t], f"H_blocks[{t}]")
        if Ht.shape[0] != m:
            raise ValueError("curvature blocks must share one shape")
        z = Z[:, t]
        out += np.kron(np.outer(z, z), Ht)
    out /= N
    return out


def kron_hessian_approx(Z, H) -> np.ndarray:
    """Kronecker-factored curvature (ZZ^T/N) kron H."""
    Z = as_matrix(Z, "Z")
    H = as_sym_matrix(H, "H")
    _check_kron_cap(H.shape[0], Z.shape[0])
    return np.kron(syrk(Z) / Z.shape[1], H)
