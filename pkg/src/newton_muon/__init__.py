"""Right-preconditioned matrix-sign optimizers and their analysis toolkit."""

from .backend import BACKEND_NAME
from .config import ExperimentConfig, OptimizerBlock, parse_path, preset
from .errors import (
    ConfigError,
    DecompositionViolated,
    DegenerateDirection,
    FixedPointDiverged,
    MarginTooSmall,
    NotPSD,
    NotPositiveDefinite,
    PlanViolation,
    TrainingDiverged,
    ZeroMatrix,
)
from .linalg import (
    CompactSVD,
    cholesky_factor,
    cholesky_inverse,
    compact_svd,
    matmul,
    psd_sqrt,
    spec_norm_upper,
    sym_eig,
    sypp,
    syrk,
)
from .mlp import MlpSpec
from .optim import (
    AdamWState,
    MatrixOptState,
    adamw_step,
    gd_step,
    lr_schedule,
    muon_step,
    newton_muon_step,
    sign_direction,
)
from .polyinv import PLANS, PolyPlan, PolyStep, poly_inverse, select_plan, verify_plan
from .precond import SecondMomentState, apply_right_precond, maybe_refresh
from .rmt import SpectrumSpec, stieltjes_solve
from .score import six_direction_scores, stretched_exponential_spectrum
from .sign import msgn_exact, newton_schulz5
from .spike import iterations_to_eps, make_spike_model, matrix_simulate
from .train import make_quadratic_task, run_quadratic_suite, train_mlp, train_quadratic

__version__ = "0.1.0"

__all__ = [
    "AdamWState",
    "BACKEND_NAME",
    "CompactSVD",
    "ConfigError",
    "DecompositionViolated",
    "DegenerateDirection",
    "ExperimentConfig",
    "FixedPointDiverged",
    "MarginTooSmall",
    "MatrixOptState",
    "MlpSpec",
    "NotPSD",
    "NotPositiveDefinite",
    "OptimizerBlock",
    "PLANS",
    "PlanViolation",
    "PolyPlan",
    "PolyStep",
    "SecondMomentState",
    "SpectrumSpec",
    "TrainingDiverged",
    "ZeroMatrix",
    "__version__",
    "adamw_step",
    "apply_right_precond",
    "cholesky_factor",
    "cholesky_inverse",
    "compact_svd",
    "gd_step",
    "iterations_to_eps",
    "lr_schedule",
    "make_quadratic_task",
    "make_spike_model",
    "matmul",
    "matrix_simulate",
    "maybe_refresh",
    "msgn_exact",
    "muon_step",
    "newton_muon_step",
    "newton_schulz5",
    "parse_path",
    "poly_inverse",
    "preset",
    "psd_sqrt",
    "run_quadratic_suite",
    "select_plan",
    "sign_direction",
    "six_direction_scores",
    "spec_norm_upper",
    "stieltjes_solve",
    "stretched_exponential_spectrum",
    "sym_eig",
    "sypp",
    "syrk",
    "train_mlp",
    "train_quadratic",
    "verify_plan",
]
