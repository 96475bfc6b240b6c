"""Experiment configuration: a validated dataclass, INI/JSON parsing with
strict unknown-key rejection, lossless serialization, and named desk-scale
presets for the study and trainer runs.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .mlp import ACTIVATIONS, DATA_KINDS, LOSSES

EXPERIMENTS = ("verify", "spike", "score-study", "plans", "train")
OPT_VARIANTS = ("gd", "muon", "newton-muon", "adamw")
SIGN_BACKENDS = ("svd", "ns5")
INVERSE_BACKENDS = ("cholesky", "poly")
TRAIN_MODES = ("quadratic", "mlp")
LR_MODES = ("greedy", "linesearch")


@dataclass(frozen=True)
class OptimizerBlock:
    """Hyperparameters for one optimizer entry in a comparison run."""

    variant: str
    lr: float | str = "greedy"
    mu: float = 0.95
    weight_decay: float = 0.0
    ewma_beta: float = 0.95
    ridge_gamma: float = 0.2
    refresh_k: int = 32
    blocks: int = 1
    sign_backend: str = "svd"
    inverse_backend: str = "cholesky"

    def __post_init__(self):
        if self.variant not in OPT_VARIANTS:
            raise ConfigError(f"unknown optimizer variant {self.variant!r}")
        if isinstance(self.lr, str):
            if self.lr not in LR_MODES:
                raise ConfigError(f"lr must be a float or one of {LR_MODES}")
        elif self.lr < 0.0:
            raise ConfigError("lr must be >= 0")
        if not (0.0 <= self.mu < 1.0):
            raise ConfigError("mu must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay must be >= 0")
        if not (0.0 <= self.ewma_beta < 1.0):
            raise ConfigError("ewma_beta must lie in [0, 1)")
        if self.ridge_gamma <= 0.0:
            raise ConfigError("ridge_gamma must be > 0")
        if self.refresh_k < 1 or self.blocks < 1:
            raise ConfigError("refresh_k and blocks must be >= 1")
        if self.sign_backend not in SIGN_BACKENDS:
            raise ConfigError(f"sign_backend must be one of {SIGN_BACKENDS}")
        if self.inverse_backend not in INVERSE_BACKENDS:
            raise ConfigError(f"inverse_backend must be one of {INVERSE_BACKENDS}")

    @property
    def run_name(self) -> str:
        """Combined label used in CSV rows, e.g. newton-muon-svd."""
        if self.variant in ("gd", "adamw"):
            return self.variant
        return f"{self.variant}-{self.sign_backend}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a CLI run needs; every field validated up front."""

    experiment: str
    seed: int = 0
    output_path: str = "out"
    # problem dimensions
    m: int = 32
    n: int = 33
    N: int = 66
    r: int = 5
    # spike / quadratic settings
    kappa: float = 64.0
    kappas: tuple[float, ...] = (4.0, 16.0, 64.0, 256.0)
    eps: float = 1e-3
    r0: float = 1.0
    # eigenvalue profile for the curvature factor
    lambda_max: float = 1.0
    lambda_min: float = 1e-4
    p: float = 0.3
    # score study
    trials: int = 64
    # trainer
    mode: str = "quadratic"
    batch: int = 128
    loss_threshold: float = 1.0
    widths: tuple[int, ...] = (32, 64, 64, 10)
    activation: str = "gelu"
    residual: bool = True
    loss: str = "cross-entropy"
    data: str = "spiked"
    # schedule
    total_steps: int = 2000
    warmup: int = 100
    min_ratio: float = 0.1
    optimizers: tuple[OptimizerBlock, ...] = (
        OptimizerBlock(variant="gd"),
        OptimizerBlock(variant="muon"),
        OptimizerBlock(variant="newton-muon"),
    )

    def __post_init__(self):
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "optimizers", tuple(self.optimizers))
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if min(self.m, self.n, self.N, self.r) < 1:
            raise ConfigError("dims m, n, N, r must be >= 1")
        if self.kappa < 1.0 or any(k < 1.0 for k in self.kappas):
            raise ConfigError("kappa values must be >= 1")
        if not 0.0 < self.eps < self.r0:
            raise ConfigError("need 0 < eps < r0")
        if not 0.0 < self.lambda_min <= self.lambda_max:
            raise ConfigError("need 0 < lambda_min <= lambda_max")
        if self.p <= 0.0:
            raise ConfigError("p must be > 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"mode must be one of {TRAIN_MODES}")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.loss_threshold <= 0.0:
            raise ConfigError("loss_threshold must be > 0")
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ConfigError("widths needs >= 2 entries, all >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if self.data not in DATA_KINDS:
            raise ConfigError(f"data must be one of {DATA_KINDS}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0 <= self.warmup <= self.total_steps:
            raise ConfigError("warmup must lie in [0, total_steps]")
        if not 0.0 <= self.min_ratio <= 1.0:
            raise ConfigError("min_ratio must lie in [0, 1]")
        if not self.optimizers:
            raise ConfigError("at least one optimizer block required")


_SECTIONS = {
    "run": ("experiment", "seed", "output_path"),
    "dims": ("m", "n", "N", "r"),
    "model": ("kappa", "kappas", "eps", "r0"),
    "spectrum": ("lambda_max", "lambda_min", "p"),
    "study": ("trials",),
    "train": ("mode", "batch", "loss_threshold"),
    "mlp": ("widths", "activation", "residual", "loss", "data"),
    "schedule": ("total_steps", "warmup", "min_ratio"),
}
_OPT_KEYS = tuple(f.name for f in dataclasses.fields(OptimizerBlock))
_INT_KEYS = {"seed", "m", "n", "N", "r", "trials", "batch", "total_steps", "warmup"}
_FLOAT_KEYS = {
    "kappa", "eps", "r0", "lambda_max", "lambda_min", "p",
    "loss_threshold", "min_ratio",
}


def _parse_scalar(key: str, raw):
    if key in _INT_KEYS:
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    if key == "residual":
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("true", "1", "yes"):
            return True
        if str(raw).lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"residual must be a boolean, got {raw!r}")
    if key == "kappas":
        if isinstance(raw, (list, tuple)):
            return tuple(float(v) for v in raw)
        return tuple(float(v) for v in str(raw).split(","))
    if key == "widths":
        if isinstance(raw, (list, tuple)):
            return tuple(int(v) for v in raw)
        return tuple(int(v) for v in str(raw).split(","))
    return str(raw)


def _parse_opt_value(key: str, raw):
    if key in ("refresh_k", "blocks"):
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key in ("mu", "weight_decay", "ewma_beta", "ridge_gamma"):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    if key == "lr":
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        text = str(raw)
        if text in LR_MODES:
            return text
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"lr must be a float or one of {LR_MODES}") from None
    return str(raw)


def _build(fields: dict, blocks: list[dict]) -> ExperimentConfig:
    if blocks:
        fields["optimizers"] = tuple(OptimizerBlock(**b) for b in blocks)
    try:
        return ExperimentConfig(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_ini(text: str) -> ExperimentConfig:
    """Parse the INI form; unknown sections or keys raise ConfigError."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed INI: {exc}") from None
    fields: dict = {}
    blocks: list[dict] = []
    for section in cp.sections():
        if section.startswith("optimizer"):
            block: dict = {}
            for key, raw in cp.items(section):
                if key not in _OPT_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                block[key] = _parse_opt_value(key, raw)
            if "variant" not in block:
                raise ConfigError(f"[{section}] is missing the variant key")
            blocks.append(block)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            fields[key] = _parse_scalar(key, raw)
    if "experiment" not in fields:
        raise ConfigError("missing required key experiment in [run]")
    return _build(fields, blocks)


def parse_json(text: str) -> ExperimentConfig:
    """Parse the JSON form: sections as objects, optimizers as a list."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top-level JSON value must be an object")
    fields: dict = {}
    blocks: list[dict] = []
    for section, content in doc.items():
        if section == "optimizers":
            if not isinstance(content, list):
                raise ConfigError("optimizers must be a list of objects")
            for entry in content:
                if not isinstance(entry, dict):
                    raise ConfigError("optimizers entries must be objects")
                block = {}
                for key, raw in entry.items():
                    if key not in _OPT_KEYS:
                        raise ConfigError(f"unknown optimizer key {key!r}")
                    block[key] = _parse_opt_value(key, raw)
                if "variant" not in block:
                    raise ConfigError("optimizer entry is missing variant")
                blocks.append(block)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be an object")
        allowed = _SECTIONS[section]
        for key, raw in content.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section {section!r}")
            fields[key] = _parse_scalar(key, raw)
    if "experiment" not in fields:
        raise ConfigError("missing required key experiment in run section")
    return _build(fields, blocks)


def parse_path(path: str) -> ExperimentConfig:
    """Dispatch on file extension: .json or INI otherwise."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if str(path).endswith(".json"):
        return parse_json(text)
    return parse_ini(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def to_ini(config: ExperimentConfig) -> str:
    """Serialize losslessly; parse_ini(to_ini(c)) == c."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for section, keys in _SECTIONS.items():
        cp[section] = {k: _format_value(getattr(config, k)) for k in keys}
    for i, block in enumerate(config.optimizers):
        cp[f"optimizer.{i}"] = {
            k: _format_value(getattr(block, k)) for k in _OPT_KEYS
        }
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def to_json(config: ExperimentConfig) -> str:
    doc: dict = {
        section: {k: getattr(config, k) for k in keys}
        for section, keys in _SECTIONS.items()
    }
    doc["optimizers"] = [
        {k: getattr(block, k) for k in _OPT_KEYS} for block in config.optimizers
    ]
    return json.dumps(doc, indent=2) + "\n"


def preset(name: str) -> ExperimentConfig:
    """Named desk-scale configurations documented in the README."""
    if name == "record4-desk":
        return ExperimentConfig(
            experiment="train",
            mode="mlp",
            seed=11,
            total_steps=2000,
            warmup=100,
            batch=128,
            loss_threshold=1.0,
            optimizers=(
                OptimizerBlock(variant="gd", lr=0.05),
                OptimizerBlock(variant="muon", lr=0.02),
                OptimizerBlock(variant="newton-muon", lr=0.02),
                OptimizerBlock(variant="adamw", lr=0.01),
            ),
        )
    if name == "quadratic-desk":
        return ExperimentConfig(
            experiment="train",
            mode="quadratic",
            seed=0,
            kappa=64.0,
            eps=1e-3,
            r0=1.0,
            total_steps=2000,
            optimizers=(
                OptimizerBlock(variant="gd", lr="greedy", mu=0.0),
                OptimizerBlock(variant="muon", lr="greedy", mu=0.0),
                OptimizerBlock(variant="newton-muon", lr="greedy", mu=0.0, refresh_k=1),
            ),
        )
    if name == "spike-table":
        return ExperimentConfig(experiment="spike", kappas=(4.0, 16.0, 64.0, 256.0))
    if name == "baseline-study":
        return ExperimentConfig(
            experiment="score-study", m=128, n=128, N=2048, kappa=64.0,
            trials=64, p=0.3,
        )
    if name == "uniform-study":
        return ExperimentConfig(
            experiment="score-study", m=128, n=128, N=2048, kappa=64.0,
            trials=64, p=2.4,
        )
    if name == "smalln-study":
        return ExperimentConfig(
            experiment="score-study", m=128, n=128, N=256, kappa=64.0,
            trials=64, p=0.3,
        )
    if name == "isotropic-study":
        return ExperimentConfig(
            experiment="score-study", m=256, n=256, N=512, kappa=1.0,
            trials=12, lambda_max=1.0, lambda_min=1.0,
        )
    raise ConfigError(f"unknown preset {name!r}")


PRESET_NAMES = (
    "record4-desk",
    "quadratic-desk",
    "spike-table",
    "baseline-study",
    "uniform-study",
    "smalln-study",
    "isotropic-study",
)
