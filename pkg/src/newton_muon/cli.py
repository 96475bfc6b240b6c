"""Command-line experiment runner.

Subcommands: verify (named property suites with pass/fail and residuals),
spike (iterations-to-eps rate table), score-study (per-trial six-direction
scores plus summary), plans (certified vs measured inverse-plan bounds), and
train (quadratic benchmark or small-MLP learning curves). Every run writes
its CSV outputs plus a JSON manifest into the output directory. Exit codes:
0 pass, 1 property or run failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
from typing import NamedTuple

import numpy as np

from . import __version__
from .backend import BACKEND_NAME
from .config import (
    PRESET_NAMES,
    ExperimentConfig,
    parse_path,
    preset,
    to_json,
)
from .errors import (
    ConfigError,
    DecompositionViolated,
    DegenerateDirection,
    PlanViolation,
    TrainingDiverged,
)
from .linalg import cholesky_inverse, compact_svd, psd_sqrt, sypp, syrk
from .mlp import MlpSpec, forward_backward, init_params, numeric_gradient, sample_batch
from .optim import lr_schedule
from .polyinv import PLANS, PolyPlan, poly_inverse, verify_plan
from .precond import SecondMomentState, maybe_refresh
from .rmt import SpectrumSpec, stieltjes_solve
from .score import (
    DIRECTIONS,
    make_triplet,
    sample_study_instance,
    score,
    score_gd_closed,
    score_muon_closed,
    six_direction_scores,
    stretched_exponential_spectrum,
    study_rows_csv,
    study_summary_csv,
    summarize_scores,
    trial_rng,
    kron_hessian_exact,
    kron_hessian_approx,
    vec,
)
from .sign import msgn_exact, newton_schulz5
from .spike import (
    METHODS,
    greedy_eta,
    iterations_to_eps,
    make_spike_model,
    matrix_simulate,
    scalar_step,
)
from .train import make_quadratic_task, run_quadratic_suite, train_csv, train_mlp


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, salt]))


class PropertyResult(NamedTuple):
    name: str
    ok: bool
    residual: float
    tol: float
    detail: str


# ---------------------------------------------------------------------------
# verify: one function per named property, each returning
# (residual, tolerance, detail); pass iff residual <= tolerance.


def _prop_recovery(seed):
    """Displacement-second-moment sign update recovers W - W_star exactly.

    With G = H D ZZ^T / N and Sigma = D D^T, the product
    Sigma^{1/2} G (ZZ^T)^{-1} is U S (U^T H U) S V^T with an SPD middle
    factor, so its matrix sign is U V^T and the left factor restores D.
    """
    worst = 0.0
    for i in range(20):
        rng = _rng(seed, 100 + i)
        m = int(rng.integers(4, 48))
        n = int(rng.integers(m, 64))
        N = n + int(rng.integers(1, 32))
        Z = rng.standard_normal((n, N))
        D = rng.standard_normal((m, n))
        H = syrk(rng.standard_normal((m, m + 2)) / math.sqrt(m)) + 0.1 * np.eye(m)
        ZZT = syrk(Z)
        G = H @ D @ ZZT / N
        root = psd_sqrt(syrk(D))
        rec = root @ msgn_exact(root @ G @ cholesky_inverse(ZZT))
        worst = max(worst, np.linalg.norm(rec - D) / np.linalg.norm(D))
    return worst, 1e-7, "20 instances, displacement recovery"


def _prop_descent(seed):
    """tr(G^T msgn(G (ZZ^T)^{-1})) never goes measurably negative."""
    worst = 0.0
    for i in range(200):
        rng = _rng(seed, 300 + i)
        m = int(rng.integers(2, 24))
        n = int(rng.integers(2, 24))
        G = rng.standard_normal((m, n))
        if i % 4 == 0 and min(m, n) > 2:
            G[:, -2:] = 0.0  # rank-deficient case
        ZZT = syrk(rng.standard_normal((n, n + 3))) + 1e-6 * np.eye(n)
        val = float(np.sum(G * msgn_exact(G @ cholesky_inverse(ZZT))))
        worst = min(worst, val)
    return max(0.0, -worst), 1e-10, "200 pairs incl. rank-deficient G"


def _prop_isotropy(seed):
    """With ZZ^T = c I the preconditioned and plain sign directions agree."""
    worst = 0.0
    for i in range(20):
        rng = _rng(seed, 500 + i)
        G = rng.standard_normal((24, 16))
        for c in (0.1, 1.0, 10.0):
            ZZT = c * np.eye(16)
            d1 = msgn_exact(G @ cholesky_inverse(ZZT))
            d2 = msgn_exact(G)
            worst = max(worst, float(np.linalg.norm(d1 - d2)))
    return worst, 1e-9, "20 gradients x c in {0.1, 1, 10}"


def _prop_spike_equivalence(seed):
    """Dense simulation and coefficient recursion tell the same story."""
    worst = 0.0
    for kappa in (4.0, 64.0):
        model = make_spike_model(32, 33, 5, kappa, _rng(seed, 700))
        for method in METHODS:
            rule = "greedy" if method == "gd" else 0.2
            traj = matrix_simulate(model, method, 50, eta_rule=rule)
            s = model.initial_state()
            for t, eta in enumerate(traj.etas):
                s = scalar_step(method, s, model.kappa, eta)
                ref = traj.states[t + 1]
                worst = max(worst, abs(s.alpha1 - ref.alpha1))
                worst = max(
                    worst, max(abs(a - b) for a, b in zip(s.betas, ref.betas))
                )
    return worst, 1e-9, "50 steps, kappa in {4, 64}, all methods"


def _prop_spike_rates(seed):
    """Iteration counts: preconditioned constant, others grow with kappa."""
    kappas = (16.0, 64.0, 256.0)
    counts = {
        meth: [iterations_to_eps(meth, 1.0, 1e-3, k) for k in kappas]
        for meth in METHODS
    }
    ok = len(set(counts["newton-muon"])) == 1
    for meth in ("gd", "muon"):
        for a, b in zip(counts[meth], counts[meth][1:]):
            ok = ok and 2.8 <= b / a <= 5.2
    detail = "; ".join(f"{m}: {counts[m]}" for m in METHODS)
    return (0.0 if ok else 1.0), 0.5, detail


def _plan_mc_residual(plan: PolyPlan, seed: int, trials: int) -> float:
    worst = 0.0
    for i in range(trials):
        rng = _rng(seed, 7000 + i)
        n = 24
        lam = rng.uniform(0.0, 1.0, n)
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        K = (Q * lam) @ Q.T
        K = 0.5 * (K + K.T)
        # choose the ridge so the scaled margin clears the plan's epsilon
        gamma = 1.10 * plan.epsilon * float(lam.max()) / (1.0 - plan.epsilon)
        X = poly_inverse(K, gamma, plan=plan)
        R = np.eye(n) - (K + gamma * np.eye(n)) @ X
        worst = max(worst, float(np.linalg.norm(R, 2)))
    return worst


def _prop_plan_certification(seed, corrupt: bool = False):
    """Chained grid bounds stay at or below every stored certificate."""
    plans = list(PLANS)
    if corrupt:
        doc = PLANS[0].to_dict()
        doc["steps"][0]["coeffs"][0] += 0.05
        plans.append(PolyPlan.from_dict(doc))
    worst_gap = -1.0
    for plan in plans:
        bound = verify_plan(plan)
        worst_gap = max(worst_gap, bound - plan.s_out)
    return max(worst_gap, 0.0), 5e-7, f"{len(plans)} plans re-verified on the grid"


def _prop_poly_consistency(seed):
    """Polynomial inverse tracks Cholesky; SYPP tracks the dense product."""
    worst = 0.0
    for i, plan in enumerate(PLANS[:4]):
        rng = _rng(seed, 900 + i)
        n = 24
        lam = rng.uniform(0.0, 1.0, n)
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        K = (Q * lam) @ Q.T
        K = 0.5 * (K + K.T)
        gamma = 1.10 * plan.epsilon * float(lam.max()) / (1.0 - plan.epsilon)
        X = poly_inverse(K, gamma, plan=plan)
        X_ref = cholesky_inverse(K + gamma * np.eye(n))
        gap = float(np.linalg.norm(X - X_ref, 2)) * (
            float(lam.max()) + gamma
        )  # scale-free: |X - K^-1| <= s_out |K^-1|, |K^-1| <= 1/gamma
        worst = max(worst, gap / (2.0 * plan.s_out * (float(lam.max()) + gamma) / gamma))
    for i in range(10):
        rng = _rng(seed, 950 + i)
        base = syrk(rng.standard_normal((16, 18)))
        P = base @ base
        Qm = 2.0 * base + np.eye(16)
        ref = P @ Qm
        worst = max(
            worst, float(np.linalg.norm(sypp(P, Qm) - ref) / np.linalg.norm(ref))
        )
    return worst, 1.0, "inverse gap as fraction of 2 s_out; SYPP vs dense"


def _prop_kron_hessian(seed):
    """Constant per-sample curvature collapses the exact form to the product."""
    rng = _rng(seed, 1100)
    m, n, N = 6, 8, 12
    H = syrk(rng.standard_normal((m, m + 2))) / m + np.eye(m)
    Z = rng.standard_normal((n, N))
    exact = kron_hessian_exact(Z, [H] * N)
    approx = kron_hessian_approx(Z, H)
    worst = float(np.linalg.norm(exact - approx) / np.linalg.norm(approx))
    D = rng.standard_normal((m, n))
    G = H @ D @ (syrk(Z) / N)
    gap = np.linalg.norm(approx @ vec(D) - vec(G)) / np.linalg.norm(vec(G))
    worst = max(worst, float(gap))
    return worst, 1e-10, "constant blocks + gradient identity"


def _prop_stieltjes(seed):
    """Identity curvature: quarter-circle mass and first fractional moment."""
    lam = 0.7
    spec = np.full(48, lam)
    sol = stieltjes_solve(spec)
    mu_ref = 8.0 / (3.0 * math.pi) * lam
    err = abs(sol.mu_half - mu_ref) / mu_ref
    mass = float(np.trapezoid(sol.density, sol.grid_x))
    err = max(err, abs(mass - 1.0) / 50.0)  # mass within a few percent
    return err, 1e-2, f"mu_half err {err:.2e}, mass {mass:.4f}"


def _prop_study_ordering(seed):
    """Mean scores order gd <= muon <= preconditioned <= newton."""
    h = stretched_exponential_spectrum(48, 1.0, 1e-4, 0.3)
    sums = dict.fromkeys(DIRECTIONS, 0.0)
    trials = 8
    for t in range(trials):
        inst = sample_study_instance(48, 48, 192, 64.0, h, _rng(seed, 1300 + t))
        for name, val in zip(DIRECTIONS, six_direction_scores(inst)):
            sums[name] += val / trials
    ok = (
        sums["gd"] <= sums["muon-svd"] * (1 + 1e-9)
        and sums["muon-svd"] <= sums["newton-muon-svd"] * (1 + 1e-9)
        and sums["newton-muon-svd"] <= sums["newton"] * (1 + 1e-9)
    )
    detail = ", ".join(f"{k} {sums[k]:.3g}" for k in ("gd", "muon-svd", "newton-muon-svd", "newton"))
    return (0.0 if ok else 1.0), 0.5, detail


def _prop_quadratic_rates(seed):
    """Preconditioned sign training beats GD and Muon by 4x on step count."""
    task = make_quadratic_task(32, 33, 64.0, _rng(seed, 1500))
    _, counts = run_quadratic_suite(task)
    nm = counts["newton-muon-svd"]
    others = [counts["gd"], counts["muon-svd"]]
    eff = [2000 if c is None else c for c in others]
    ok = nm is not None and 4 * nm <= min(eff)
    return (0.0 if ok else 1.0), 0.5, f"counts {counts}"


def _prop_svd_orthogonality(seed):
    """Compact SVD factors stay orthonormal even at condition 1e8."""
    worst = 0.0
    for i in range(5):
        rng = _rng(seed, 1700 + i)
        n = 48
        lam = np.logspace(0, -8, n)
        Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
        P, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = (Qm * lam) @ P.T
        U, s, V = compact_svd(A)
        worst = max(worst, float(np.linalg.norm(U.T @ U - np.eye(U.shape[1]))))
        worst = max(worst, float(np.linalg.norm(V.T @ V - np.eye(V.shape[1]))))
        worst = max(worst, float(np.linalg.norm((U * s) @ V.T - A)) / float(np.linalg.norm(A)))
    return worst, 1e-10, "5 matrices at condition 1e8"


def _prop_msgn(seed):
    """msgn is idempotent-by-construction and the quintic iteration tracks it."""
    worst = 0.0
    for i in range(10):
        rng = _rng(seed, 1900 + i)
        A = rng.standard_normal((20, 14))
        S = msgn_exact(A)
        worst = max(worst, float(np.linalg.norm(msgn_exact(S) - S)))
        sv = np.linalg.svd(S, compute_uv=False)
        worst = max(worst, float(np.max(np.abs(sv - 1.0))))
        ns = newton_schulz5(A)
        # the quintic trades accuracy for speed: its fixed point leaves
        # singular values in a band around 1, so deviation up to ~0.32
        worst = max(worst, float(np.linalg.norm(ns - S, 2)) / 0.35)
    return worst, 1.0, "idempotence, unit spectrum, quintic within 0.35"


def _prop_precond_refresh(seed):
    """Refresh cadence: K frozen off-cadence, ridged inverse exact on-cadence."""
    rng = _rng(seed, 2100)
    state = SecondMomentState(dim=12, beta=0.9, gamma=0.2, refresh_k=3)
    Z = rng.standard_normal((12, 30))
    K0 = [k.copy() for k in state.K]
    maybe_refresh(state, Z, 0)  # (0+1) % 3 != 0: no-op
    worst = float(np.linalg.norm(state.K[0] - K0[0]))
    maybe_refresh(state, Z, 2)  # refresh fires
    K_manual = 0.9 * K0[0] + 0.1 / 30.0 * syrk(Z)
    worst = max(worst, float(np.linalg.norm(state.K[0] - K_manual)))
    gamma_l = 0.2 * float(np.trace(K_manual)) / 12.0
    inv_ref = cholesky_inverse(K_manual + gamma_l * np.eye(12))
    worst = max(worst, float(np.linalg.norm(state.K_inv[0] - inv_ref)))
    return worst, 1e-12, "cadence + EWMA + ridged inverse"


def _prop_schedule(seed):
    """Warmup is linear, the peak hits base_lr, the tail hits the floor."""
    base, total, warmup, floor = 0.4, 200, 40, 0.1
    worst = abs(lr_schedule(20, total, warmup, floor, base) - 0.5 * base)
    worst = max(worst, abs(lr_schedule(warmup, total, warmup, floor, base) - base))
    worst = max(worst, abs(lr_schedule(total, total, warmup, floor, base) - floor * base))
    mids = [lr_schedule(t, total, warmup, floor, base) for t in range(warmup, total)]
    worst = max(worst, 0.0 if all(a >= b - 1e-15 for a, b in zip(mids, mids[1:])) else 1.0)
    return worst, 1e-12, "endpoints + monotone cosine tail"


def _prop_config_round_trip(seed):
    """parse(serialize(c)) == c for every named preset, both formats."""
    from . import config as config_mod

    for name in PRESET_NAMES:
        c = preset(name)
        if config_mod.parse_ini(config_mod.to_ini(c)) != c:
            return 1.0, 0.5, f"INI round trip failed for {name}"
        if config_mod.parse_json(config_mod.to_json(c)) != c:
            return 1.0, 0.5, f"JSON round trip failed for {name}"
    return 0.0, 0.5, f"{len(PRESET_NAMES)} presets, INI and JSON"


def _prop_csv_determinism(seed):
    """Identical seed gives bit-identical study and spike CSV output."""
    h = stretched_exponential_spectrum(16, 1.0, 1e-4, 0.3)

    def study_csv():
        rows = []
        for t in range(4):
            inst = sample_study_instance(16, 16, 64, 8.0, h, trial_rng(seed, t))
            for name, val in zip(DIRECTIONS, six_direction_scores(inst)):
                rows.append((t, name, float(val)))
        return study_rows_csv(rows)

    ok = study_csv() == study_csv()
    from .spike import trajectory_csv

    def spike_csv():
        model = make_spike_model(8, 9, 3, 16.0, _rng(seed, 2500))
        return trajectory_csv(matrix_simulate(model, "newton-muon", 10))

    ok = ok and spike_csv() == spike_csv()
    return (0.0 if ok else 1.0), 0.5, "study rows + spike trajectory"


def _prop_spectrum_profile(seed):
    """Stretched-exponential profile hits both endpoints and stays monotone."""
    vals = stretched_exponential_spectrum(32, 1.0, 1e-4, 0.3)
    worst = abs(vals[0] - 1.0) + abs(vals[-1] - 1e-4) / 1e-4
    worst = max(worst, 0.0 if np.all(np.diff(vals) < 0) else 1.0)
    spec = SpectrumSpec(m=32, lambda_max=1.0, lambda_min=1e-4, p=0.3)
    worst = max(worst, float(np.max(np.abs(spec.values - vals))))
    return worst, 1e-12, "endpoints, monotonicity, SpectrumSpec agreement"


def _prop_mlp_backprop(seed):
    """Hand-written gradients match central finite differences."""
    worst = 0.0
    for loss in ("mse", "cross-entropy"):
        spec = MlpSpec(
            widths=(5, 4, 3), activation="gelu", residual=False, loss=loss
        )
        rng = _rng(seed, 2700)
        params = init_params(spec, rng)
        teacher = init_params(spec, rng)
        X, Y = sample_batch(spec, teacher, 8, rng)
        _, grads, _ = forward_backward(spec, params, X, Y)
        for layer in range(2):
            ref = numeric_gradient(spec, params, X, Y, layer)
            scale = max(float(np.max(np.abs(ref))), 1e-12)
            worst = max(worst, float(np.max(np.abs(grads[layer] - ref))) / scale)
    return worst, 1e-6, "gelu net, both losses, central differences"


PROPERTIES = (
    ("prop-1-recovery", _prop_recovery),
    ("prop-2-descent", _prop_descent),
    ("prop-3-isotropy", _prop_isotropy),
    ("prop-4-spike-equivalence", _prop_spike_equivalence),
    ("prop-5-spike-rates", _prop_spike_rates),
    ("prop-6-plan-certification", _prop_plan_certification),
    ("prop-7-poly-consistency", _prop_poly_consistency),
    ("prop-8-kron-hessian", _prop_kron_hessian),
    ("prop-9-stieltjes", _prop_stieltjes),
    ("prop-10-study-ordering", _prop_study_ordering),
    ("prop-11-quadratic-rates", _prop_quadratic_rates),
    ("prop-12-svd-orthogonality", _prop_svd_orthogonality),
    ("prop-13-msgn-properties", _prop_msgn),
    ("prop-14-precond-refresh", _prop_precond_refresh),
    ("prop-15-schedule-shape", _prop_schedule),
    ("prop-16-config-round-trip", _prop_config_round_trip),
    ("prop-17-csv-determinism", _prop_csv_determinism),
    ("prop-18-spectrum-profile", _prop_spectrum_profile),
    ("prop-19-mlp-backprop", _prop_mlp_backprop),
)


def run_properties(
    seed: int, name_filter: str | None = None, corrupt_plan: bool = False
) -> list[PropertyResult]:
    """Run matching property checks, catching per-check exceptions."""
    results = []
    for name, fn in PROPERTIES:
        if name_filter and name_filter not in name:
            continue
        try:
            if name == "prop-6-plan-certification":
                residual, tol, detail = fn(seed, corrupt=corrupt_plan)
            else:
                residual, tol, detail = fn(seed)
            results.append(
                PropertyResult(name, residual <= tol, float(residual), tol, detail)
            )
        except Exception as exc:  # aggregated, never aborts the suite
            results.append(
                PropertyResult(
                    name, False, math.inf, 0.0, f"{type(exc).__name__}: {exc}"
                )
            )
    return results


def format_report(results: list[PropertyResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        lines.append(
            f"{r.name:28s} {status}  residual {r.residual:.3e}"
            f"  tol {r.tol:.1e}  {r.detail}"
        )
    n_pass = sum(r.ok for r in results)
    lines.append(f"{n_pass}/{len(results)} properties passed")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output plumbing


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_manifest(out_dir: str, config: ExperimentConfig, outputs: list[str]) -> str:
    manifest = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config_sha256": hashlib.sha256(to_json(config).encode()).hexdigest(),
        "package_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "backend": BACKEND_NAME,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    return _write(out_dir, "manifest.json", json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(config: ExperimentConfig, args) -> int:
    results = run_properties(
        config.seed,
        name_filter=args.filter,
        corrupt_plan=args.inject_corrupt_plan,
    )
    report = format_report(results)
    print(report, end="")
    out = [_write(config.output_path, "verify_report.txt", report)]
    write_manifest(config.output_path, config, out)
    if not results:
        print(f"no properties match filter {args.filter!r}", file=sys.stderr)
        return 1
    return 0 if all(r.ok for r in results) else 1


def cmd_spike(config: ExperimentConfig, args) -> int:
    rng = _rng(config.seed, 0)
    a0 = float(rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0]))
    bs = [float(rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])) for _ in range(config.r)]
    peak = max(abs(a0), max(abs(b) for b in bs))
    a0 *= config.r0 / peak
    bs = tuple(b * config.r0 / peak for b in bs)
    lines = ["method,kappa,iters_bound,iters_matrix,max_residual"]
    failed = False
    for kappa in config.kappas:
        model = make_spike_model(
            config.m, config.n, config.r, kappa, rng, alpha0=a0, betas0=bs
        )
        for method in METHODS:
            bound = iterations_to_eps(method, config.r0, config.eps, kappa)
            try:
                traj = matrix_simulate(model, method, bound + 10)
            except DecompositionViolated as exc:
                print(f"{method} kappa={kappa:g}: {exc}", file=sys.stderr)
                failed = True
                continue
            hit = next(
                (t for t, s in enumerate(traj.states) if s.r_max <= config.eps), -1
            )
            if hit < 0:
                failed = True
            lines.append(
                f"{method},{kappa!r},{bound},{hit},{max(traj.residuals)!r}"
            )
    csv_text = "\n".join(lines) + "\n"
    print(csv_text, end="")
    out = [_write(config.output_path, "spike.csv", csv_text)]
    write_manifest(config.output_path, config, out)
    return 1 if failed else 0


def cmd_score_study(config: ExperimentConfig, args) -> int:
    h_values = stretched_exponential_spectrum(
        config.m, config.lambda_max, config.lambda_min, config.p
    )
    rows = []
    degenerate: list[int] = []
    for trial in range(config.trials):
        inst = sample_study_instance(
            config.m, config.n, config.N, config.kappa, h_values,
            trial_rng(config.seed, trial),
        )
        try:
            scores = six_direction_scores(inst)
        except DegenerateDirection:
            degenerate.append(trial)
            continue
        for name, value in zip(DIRECTIONS, scores):
            rows.append((trial, name, float(value)))
    if not rows:
        print("all trials degenerate", file=sys.stderr)
        return 1
    summary = summarize_scores(rows)
    out = [
        _write(config.output_path, "score_trials.csv", study_rows_csv(rows)),
        _write(config.output_path, "score_summary.csv", study_summary_csv(summary)),
    ]
    write_manifest(config.output_path, config, out)
    print(study_summary_csv(summary), end="")
    print(f"trials: {config.trials}, degenerate excluded: {len(degenerate)}")
    return 0


def cmd_plans(config: ExperimentConfig, args) -> int:
    failed = False
    lines = []
    for plan in PLANS:
        try:
            measured = verify_plan(plan)
            mc = _plan_mc_residual(plan, config.seed, trials=10)
            ok = mc <= plan.s_out
            failed = failed or not ok
            lines.append(
                f"eps={plan.epsilon:<7g} sypp={plan.total_sypp:<3d}"
                f" certified={plan.s_out:<9.6f} chained={measured:<9.6f}"
                f" mc_residual={mc:.6f} {'ok' if ok else 'VIOLATION'}"
            )
        except PlanViolation as exc:
            failed = True
            lines.append(f"eps={plan.epsilon:<7g} sypp={plan.total_sypp:<3d} {exc}")
    report = "\n".join(lines) + "\n"
    print(report, end="")
    out = [_write(config.output_path, "plans_report.txt", report)]
    write_manifest(config.output_path, config, out)
    return 1 if failed else 0


def cmd_train(config: ExperimentConfig, args) -> int:
    if config.mode == "quadratic":
        task = make_quadratic_task(
            config.m, config.n, config.kappa, _rng(config.seed, 0), r0=config.r0
        )
        rows = []
        counts: dict[str, int | None] = {}
        from .train import train_quadratic

        for block in config.optimizers:
            r, n_steps = train_quadratic(
                task,
                block.run_name,
                total_steps=config.total_steps,
                target=config.eps,
                lr=block.lr,
                mu=block.mu,
                weight_decay=block.weight_decay,
                ewma_beta=block.ewma_beta,
                ridge_gamma=block.ridge_gamma,
                refresh_k=block.refresh_k,
                blocks=block.blocks,
                inverse_backend=block.inverse_backend,
            )
            rows.extend(r)
            counts[block.run_name] = n_steps
        out = [_write(config.output_path, "train_curves.csv", train_csv(rows, True))]
        count_lines = ["optimizer,steps_to_target"]
        for name, c in counts.items():
            count_lines.append(f"{name},{-1 if c is None else c}")
        out.append(
            _write(config.output_path, "train_counts.csv", "\n".join(count_lines) + "\n")
        )
        write_manifest(config.output_path, config, out)
        for name, c in counts.items():
            print(f"{name}: {'not reached' if c is None else c} steps to {config.eps:g}")
        return 0
    # mlp mode
    spec = MlpSpec(
        widths=config.widths,
        activation=config.activation,
        residual=config.residual,
        loss=config.loss,
        data=config.data,
        data_kappa=config.kappa,
        data_p=config.p,
    )
    rows = []
    below = True
    for block in config.optimizers:
        if isinstance(block.lr, str):
            raise ConfigError(
                f"mlp mode needs a numeric lr for {block.run_name}, got {block.lr!r}"
            )
        r = train_mlp(
            spec,
            block.run_name,
            seed=config.seed,
            total_steps=config.total_steps,
            batch=config.batch,
            base_lr=block.lr,
            warmup=config.warmup,
            min_ratio=config.min_ratio,
            mu=block.mu,
            weight_decay=block.weight_decay,
            ewma_beta=block.ewma_beta,
            ridge_gamma=block.ridge_gamma,
            refresh_k=block.refresh_k,
            blocks=block.blocks,
            inverse_backend=block.inverse_backend,
        )
        rows.extend(r)
        best = min(row[3] for row in r)
        reached = best < config.loss_threshold
        below = below and reached
        print(
            f"{block.run_name}: best loss {best:.4f}"
            f" ({'below' if reached else 'ABOVE'} threshold {config.loss_threshold:g})"
        )
    out = [_write(config.output_path, "train_curves.csv", train_csv(rows, False))]
    write_manifest(config.output_path, config, out)
    return 0 if below else 1


# ---------------------------------------------------------------------------
# entry point

_DEFAULT_PRESET = {
    "verify": None,
    "spike": "spike-table",
    "score-study": "baseline-study",
    "plans": None,
    "train": "quadratic-desk",
}

_COMMANDS = {
    "verify": cmd_verify,
    "spike": cmd_spike,
    "score-study": cmd_score_study,
    "plans": cmd_plans,
    "train": cmd_train,
}


def _resolve_config(experiment: str, args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        config = parse_path(args.config)
        if config.experiment != experiment:
            raise ConfigError(
                f"config is for experiment {config.experiment!r},"
                f" but the {experiment!r} subcommand was invoked"
            )
    elif args.preset:
        config = preset(args.preset)
        if config.experiment != experiment:
            raise ConfigError(
                f"preset {args.preset!r} is for experiment {config.experiment!r}"
            )
    else:
        name = _DEFAULT_PRESET[experiment]
        config = preset(name) if name else ExperimentConfig(experiment=experiment)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.out is not None:
        config = dataclasses.replace(config, output_path=args.out)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Experiment runner for sign-based preconditioned optimizers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to an INI or JSON config file")
        p.add_argument(
            "--preset", help=f"named preset, one of: {', '.join(PRESET_NAMES)}"
        )
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the config output directory")
        if name == "verify":
            p.add_argument(
                "--filter", help="run only properties whose name contains this"
            )
            p.add_argument(
                "--inject-corrupt-plan",
                action="store_true",
                help="tamper with a stored plan to exercise the violation path",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args.command, args)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, DecompositionViolated, PlanViolation) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
