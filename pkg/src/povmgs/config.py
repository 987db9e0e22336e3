"""Experiment configuration: schema, YAML loading, strict validation.

Configurations are flat YAML mappings.  Unknown keys are rejected (with
the offending line) rather than ignored; silently dropping a misspelled
``buffer_batch`` would change physics results without any visible error.
Every field, including defaults the user never wrote, is echoed into the
run manifest so an output directory fully documents its own run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict

import yaml

from . import oracle
from .pauli import parse_pauli


class ConfigError(Exception):
    """Invalid configuration file or option (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    model: str = "gapped_tfim"  # preset name, or "custom" with custom_terms
    size: int = 8
    custom_terms: list = field(default_factory=list)  # [[coeff, "X0 X1"], ...]

    pool_weight: int = 2
    pool_range: int = 2
    tau: float = 1.0
    s: float = 1.0
    psd_constraints: bool = True

    buffer_batch: int = 8192
    grad_batch: int = 512
    eval_batch: int | None = None  # defaults to buffer_batch
    steps: int = 2000

    hidden_dim: int = 64
    n_layers: int = 2
    dual_stream: bool = True

    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    beta_start: list = field(default_factory=lambda: [0.7, 0.9])
    beta_end: list = field(default_factory=lambda: [0.95, 0.99])
    lambda_tgt_min: float = 0.99
    lambda_tgt_max: float = 1.4
    lambda_eta: float = 0.02
    violation_ref: float = 0.5

    temperature_start: float = 1.0
    temperature_floor: float = 0.1
    anneal_fraction: float = 0.6

    seed: int = 0
    out_dir: str | None = None
    checkpoint_interval: int = 0  # extra checkpoints every N steps; final always
    oracle_compare: str = "auto"  # auto | on | off
    threshold_energy_density: float = 0.02
    threshold_correlator: float = 0.1

    def __post_init__(self):
        if self.model != "custom" and self.model not in oracle.PRESETS:
            raise ConfigError(
                f"unknown model {self.model!r}; choose one of "
                f"{sorted(oracle.PRESETS)} or 'custom'"
            )
        if self.model == "custom" and not self.custom_terms:
            raise ConfigError("model 'custom' requires custom_terms")
        if self.model != "custom" and self.custom_terms:
            raise ConfigError("custom_terms only apply to model 'custom'")
        if self.size < 1:
            raise ConfigError("size must be >= 1")
        if self.pool_weight not in (1, 2):
            raise ConfigError("pool_weight must be 1 or 2")
        if self.pool_weight == 2 and self.pool_range < 2:
            raise ConfigError("pool_range must be >= 2 for pool_weight 2")
        if self.pool_range > self.size:
            raise ConfigError("pool_range cannot exceed size")
        if self.tau <= 0 or self.s <= 0:
            raise ConfigError("tau and s must be positive")
        for name in ("buffer_batch", "grad_batch", "steps", "hidden_dim", "n_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.eval_batch is not None and self.eval_batch < 1:
            raise ConfigError("eval_batch must be >= 1")
        if self.buffer_batch % 2:
            raise ConfigError("buffer_batch must be even (it is split in half)")
        if not 0 < self.anneal_fraction <= 1:
            raise ConfigError("anneal_fraction must be in (0, 1]")
        if not 0 < self.temperature_floor <= self.temperature_start:
            raise ConfigError("need 0 < temperature_floor <= temperature_start")
        if len(self.beta_start) != 2 or len(self.beta_end) != 2:
            raise ConfigError("beta_start and beta_end must be [beta1, beta2] pairs")
        if not 0 < self.lambda_tgt_min <= self.lambda_tgt_max:
            raise ConfigError("need 0 < lambda_tgt_min <= lambda_tgt_max")
        if self.oracle_compare not in ("auto", "on", "off"):
            raise ConfigError("oracle_compare must be auto, on or off")

    @property
    def eval_batch_or_default(self) -> int:
        return self.buffer_batch if self.eval_batch is None else self.eval_batch

    def hamiltonian(self) -> oracle.HamiltonianSpec:
        if self.model == "custom":
            try:
                terms = tuple(
                    (float(c), parse_pauli(text)) for c, text in self.custom_terms
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad custom_terms entry: {exc}") from exc
            return oracle.custom(self.size, terms)
        return oracle.PRESETS[self.model](self.size)

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, value, line):
    """Light type checking with int->float promotion; rejects surprises."""
    if value is None:
        if name in ("eval_batch", "out_dir"):
            return None
        raise ConfigError(f"line {line}: {name} must not be null")
    want_float = name in (
        "tau", "s", "learning_rate", "weight_decay", "lambda_tgt_min",
        "lambda_tgt_max", "lambda_eta", "violation_ref", "temperature_start",
        "temperature_floor", "anneal_fraction", "threshold_energy_density",
        "threshold_correlator",
    )
    if want_float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {line}: {name} must be a number")
        return float(value)
    want_int = name in (
        "size", "pool_weight", "pool_range", "buffer_batch", "grad_batch",
        "eval_batch", "steps", "hidden_dim", "n_layers", "seed",
        "checkpoint_interval",
    )
    if want_int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"line {line}: {name} must be an integer")
        return value
    if name in ("psd_constraints", "dual_stream"):
        if not isinstance(value, bool):
            raise ConfigError(f"line {line}: {name} must be true or false")
        return value
    if name in ("beta_start", "beta_end", "custom_terms"):
        if not isinstance(value, list):
            raise ConfigError(f"line {line}: {name} must be a list")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"line {line}: {name} must be a string")
    return value


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a YAML configuration file.

    ``overrides`` (already-typed values, e.g. from CLI flags) replace
    file values after validation of the file itself.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if node is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    lines = {}
    if node is not None:
        for key_node, _ in node.value:
            lines[key_node.value] = key_node.start_mark.line + 1
    kwargs = {}
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(
                f"{path}, line {lines.get(key, '?')}: unknown key {key!r}"
            )
        kwargs[key] = _coerce(key, value, lines.get(key, "?"))
    if overrides:
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
