"""Constrained variational energy minimization.

Each step has two phases.  A buffer phase draws a large inference-mode
sample batch, logs its energy, and (constraints on) splits it in half to
diagonalize the training-half Gram matrices and validate their spectra
on the other half.  A gradient phase draws a smaller straight-through
Gumbel-softmax batch on which both the energy and the constraint loss
are differentiable, and backpropagates the combined objective

    L = L_E + lambda_psd * L_psd,
    lambda_psd = lambda_tgt * ||grad L_E|| / ||grad L_psd||,

so the constraint push is always a fixed multiple of the energy pull.
When the two gradients point against each other, the energy gradient's
conflicting component is removed in proportion to the worst Fermi
violation P before the sum, which stops a confidently wrong energy
signal from dragging the state further out of the physical set.
lambda_tgt itself floats on a slow multiplicative controller pinned to
P ~ 0.5, and the AdamW betas interpolate between slow- and fast-memory
settings as lambda_tgt moves across its band (log-linear position x).

All randomness flows through named generator streams spawned from the
single config seed, in a fixed per-step order, so a rerun reproduces the
metrics stream bit for bit.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constraints, estimators, frame, oracle
from .config import ExperimentConfig
from .model import DualStreamModel
from .pauli import gram_expansion

_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient stops being finite (CLI exit 3)."""


def anneal_temperature(step: int, cfg: ExperimentConfig) -> float:
    """Geometric annealing: reaches the floor at anneal_fraction * steps
    and stays there."""
    decay_steps = max(1.0, cfg.anneal_fraction * cfg.steps)
    gamma = (cfg.temperature_floor / cfg.temperature_start) ** (1.0 / decay_steps)
    return max(cfg.temperature_floor, cfg.temperature_start * gamma**step)


def beta_schedule(lambda_tgt: float, cfg: ExperimentConfig):
    """AdamW betas from the controller position.

    x is lambda_tgt's position in log space between its bounds, clamped
    to [0, 1]; betas interpolate linearly from beta_start to beta_end.
    """
    lo, hi = np.log(cfg.lambda_tgt_min), np.log(cfg.lambda_tgt_max)
    if hi <= lo:
        x = 1.0
    else:
        x = (np.log(lambda_tgt) - lo) / (hi - lo)
    x = float(min(1.0, max(0.0, x)))
    b1 = cfg.beta_start[0] + x * (cfg.beta_end[0] - cfg.beta_start[0])
    b2 = cfg.beta_start[1] + x * (cfg.beta_end[1] - cfg.beta_start[1])
    return x, b1, b2


def adaptive_lambda(grad_e: np.ndarray, grad_psd: np.ndarray, lambda_tgt: float) -> float:
    """lambda_psd = lambda_tgt ||grad_e|| / ||grad_psd|| (0 for a zero
    constraint gradient: nothing to weigh)."""
    norm_psd = float(np.linalg.norm(grad_psd))
    if norm_psd == 0.0:
        return 0.0
    return lambda_tgt * float(np.linalg.norm(grad_e)) / norm_psd


def project_conflict(grad_e: np.ndarray, grad_psd: np.ndarray, violation: float) -> np.ndarray:
    """Remove the conflicting component of the energy gradient.

    When grad_e . grad_psd < 0, return
    grad_e - violation * (grad_e . grad_psd / ||grad_psd||^2) * grad_psd;
    at violation = 1 the result is exactly orthogonal to grad_psd.
    """
    norm_sq = float(grad_psd @ grad_psd)
    if norm_sq == 0.0:
        return grad_e
    dot = float(grad_e @ grad_psd)
    if dot >= 0.0:
        return grad_e
    return grad_e - violation * (dot / norm_sq) * grad_psd


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adamw_update(state: AdamWState, params: np.ndarray, grad: np.ndarray,
                 lr: float, beta1: float, beta2: float, weight_decay: float) -> np.ndarray:
    """One decoupled-weight-decay Adam step; returns the new parameters.

    With zero gradient and zero weight decay the update is exactly zero
    (0 / (0 + eps)), so a converged region of parameter space is a true
    fixed point.
    """
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    mhat = state.m / (1.0 - beta1**state.t)
    vhat = state.v / (1.0 - beta2**state.t)
    return params - lr * (mhat / (np.sqrt(vhat) + _EPS) + weight_decay * params)


def adapt_lambda_tgt(lambda_tgt: float, violation: float, cfg: ExperimentConfig) -> float:
    """Slow multiplicative controller pinning the violation near its
    reference: lambda_tgt <- clip(lambda_tgt (1 + eta (P - P_ref)))."""
    out = lambda_tgt * (1.0 + cfg.lambda_eta * (violation - cfg.violation_ref))
    return float(min(cfg.lambda_tgt_max, max(cfg.lambda_tgt_min, out)))


def spawn_rngs(seed: int) -> dict[str, np.random.Generator]:
    """Named, independent generator streams from one seed."""
    root = np.random.SeedSequence(seed)
    names = ("init", "buffer", "grad", "split", "eval")
    children = root.spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


class Trainer:
    """Holds the model, state and cached structures for one experiment."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str | Path | None = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir) if out_dir else None
        self.ham = cfg.hamiltonian()
        self.term_table, self.term_coeffs = estimators.hamiltonian_table(self.ham)
        self.expansion = None
        if cfg.psd_constraints:
            self.expansion = gram_expansion(cfg.pool_weight, cfg.pool_range, cfg.size)
        self.rngs = spawn_rngs(cfg.seed)
        self.model = DualStreamModel(cfg.size, cfg.hidden_dim, cfg.n_layers,
                                     cfg.dual_stream, seed=self.rngs["init"])
        n = self.model.n_params
        self.opt = AdamWState(m=np.zeros(n), v=np.zeros(n))
        self.step_count = 0
        self.lambda_tgt = cfg.lambda_tgt_min
        self.reference: oracle.ExactState | None = None
        compare = cfg.oracle_compare
        if compare == "on" or (compare == "auto" and cfg.size <= 10):
            self.reference = oracle.ground_state(self.ham)
        self._workers = int(os.environ.get("POVMGS_WORKERS", "1"))

    # -- single step ------------------------------------------------------

    def training_step(self) -> dict:
        cfg = self.cfg
        temperature = anneal_temperature(self.step_count, cfg)
        x_pos, beta1, beta2 = beta_schedule(self.lambda_tgt, cfg)

        # buffer phase: inference samples for metrics and Gram validation
        buffer, _ = self.model.sample_inference(cfg.buffer_batch, self.rngs["buffer"])
        ref_density = self.reference.energy_density if self.reference else None
        energy_report = estimators.estimate_energy(buffer, self.ham, ref_density)

        spectral = None
        if cfg.psd_constraints:
            half_a, half_b = constraints.split_halves(buffer, self.rngs["split"])
            m_train = constraints.build_gram_hard(
                self.expansion, half_a, tag="train", workers=self._workers)
            m_val = constraints.build_gram_hard(
                self.expansion, half_b, tag="val", workers=self._workers)
            spectral = constraints.validate_spectrum(m_train, m_val, cfg.tau, cfg.s)

        # gradient phase: straight-through relaxed samples
        _, tape = self.model.sample_gumbel_st(cfg.grad_batch, temperature, self.rngs["grad"])
        site_table = frame.soft_site_values(tape.y)
        term_eval = self.term_table.eval_soft(site_table)
        loss_e = float(self.term_coeffs @ term_eval.mean())
        dtable_e = term_eval.backward_mean(self.term_coeffs)
        grad_e = self.model.flatten_grads(
            self.model.backward(tape, dtable_e @ frame.DUAL_COEFFICIENTS.T))

        loss_psd = 0.0
        violation = 0.0
        min_lam_val = None
        grad_psd = np.zeros_like(grad_e)
        if cfg.psd_constraints:
            m_grad, soft_ev = constraints.build_gram_soft(self.expansion, site_table)
            loss_psd, weight_mats, report = constraints.psd_loss(spectral, m_grad)
            violation = report.violation
            min_lam_val = float(report.min_lam_val.min())
            dtable_psd = constraints.psd_backward(
                self.expansion, weight_mats, spectral, soft_ev)
            grad_psd = self.model.flatten_grads(
                self.model.backward(tape, dtable_psd @ frame.DUAL_COEFFICIENTS.T))

        if not (np.isfinite(loss_e) and np.isfinite(loss_psd)):
            raise TrainingDiverged(
                f"non-finite loss at step {self.step_count}: "
                f"energy {loss_e}, psd {loss_psd}")

        lambda_psd = adaptive_lambda(grad_e, grad_psd, self.lambda_tgt)
        grad_e_adj = project_conflict(grad_e, grad_psd, violation)
        total = grad_e_adj + lambda_psd * grad_psd
        if not np.all(np.isfinite(total)):
            raise TrainingDiverged(f"non-finite gradient at step {self.step_count}")

        flat = adamw_update(self.opt, self.model.get_flat(), total,
                            cfg.learning_rate, beta1, beta2, cfg.weight_decay)
        self.model.set_flat(flat)
        self.lambda_tgt = adapt_lambda_tgt(self.lambda_tgt, violation, cfg)
        self.step_count += 1

        return {
            "step": self.step_count,
            "energy": energy_report.energy,
            "energy_density_vs_reference": energy_report.density_vs_reference,
            "psd_loss": loss_psd,
            "violation": violation,
            "lambda_psd": lambda_psd,
            "lambda_tgt": self.lambda_tgt,
            "temperature": temperature,
            "min_lambda_val": min_lam_val,
        }

    # -- evaluation and artifacts ------------------------------------------

    def evaluate(self, n_samples: int | None = None):
        """Fresh inference batch -> energy report and correlator tables."""
        n = n_samples or self.cfg.eval_batch_or_default
        outcomes, _ = self.model.sample_inference(n, self.rngs["eval"])
        ref = self.reference.energy_density if self.reference else None
        report = estimators.estimate_energy(outcomes, self.ham, ref, with_variance=True)
        tables = [estimators.estimate_correlators(outcomes, ax) for ax in (1, 2, 3)]
        return report, tables

    def manifest(self, argv: list[str] | None = None) -> dict:
        from . import __version__

        import platform

        import scipy

        return {
            "package_version": __version__,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "invocation": argv,
            "config": self.cfg.to_dict(),
            "seed_streams": {
                "root": self.cfg.seed,
                "order": ["init", "buffer", "grad", "split", "eval"],
            },
            "hamiltonian": {
                "name": self.ham.name,
                "size": self.ham.size,
                "n_terms": len(self.ham.terms),
            },
            "n_params": self.model.n_params,
            "pool_dim": self.expansion.dim if self.expansion else 0,
            "reference_energy": self.reference.energy if self.reference else None,
            "reference_energy_density": (
                self.reference.energy_density if self.reference else None),
        }

    def rng_states(self) -> dict:
        return {name: gen.bit_generator.state for name, gen in self.rngs.items()}

    def restore_rng_states(self, states: dict) -> None:
        for name, st in states.items():
            self.rngs[name].bit_generator.state = st

    def save_checkpoint(self, path: Path) -> None:
        extra = {
            "step": self.step_count,
            "lambda_tgt": self.lambda_tgt,
            "adam_t": self.opt.t,
            "rng_states": self.rng_states(),
            "config": self.cfg.to_dict(),
        }
        self.model.save(path, extra=extra)
        # optimizer moments ride in a sidecar inside the same directory
        np.savez(str(path) + ".opt.npz", m=self.opt.m.astype("<f8"),
                 v=self.opt.v.astype("<f8"))

    def load_checkpoint(self, path: Path) -> dict:
        model, meta = DualStreamModel.load(path)
        mine = self.model.metadata()
        if meta["model"] != mine:
            raise ValueError(
                f"checkpoint architecture {meta['model']} does not match config {mine}")
        self.model = model
        extra = meta.get("extra", {})
        self.step_count = int(extra.get("step", 0))
        self.lambda_tgt = float(extra.get("lambda_tgt", self.cfg.lambda_tgt_min))
        opt_path = Path(str(path) + ".opt.npz")
        if opt_path.exists():
            with np.load(opt_path) as data:
                self.opt = AdamWState(m=data["m"].astype(float),
                                      v=data["v"].astype(float),
                                      t=int(extra.get("adam_t", 0)))
        if "rng_states" in extra:
            self.restore_rng_states(extra["rng_states"])
        return extra

    def run(self, log=None, argv: list[str] | None = None) -> dict:
        """Full training run with artifact writing; returns a summary."""
        cfg = self.cfg
        out = self.out_dir
        metrics_fh = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "checkpoints").mkdir(exist_ok=True)
            with open(out / "manifest.json", "w") as fh:
                json.dump(self.manifest(argv), fh, indent=2, sort_keys=True)
                fh.write("\n")
            mode = "a" if self.step_count else "w"
            metrics_fh = open(out / "metrics.jsonl", mode)
        start = time.monotonic()
        try:
            while self.step_count < cfg.steps:
                record = self.training_step()
                if metrics_fh is not None:
                    record["wallclock"] = time.monotonic() - start
                    json.dump(record, metrics_fh, sort_keys=True)
                    metrics_fh.write("\n")
                    metrics_fh.flush()
                if log and (self.step_count % max(1, cfg.steps // 20) == 0
                            or self.step_count == cfg.steps):
                    log(f"step {self.step_count}/{cfg.steps} "
                        f"energy={record['energy']:.6f} P={record['violation']:.3f} "
                        f"lambda_tgt={record['lambda_tgt']:.3f}")
                if (out is not None and cfg.checkpoint_interval
                        and self.step_count % cfg.checkpoint_interval == 0
                        and self.step_count < cfg.steps):
                    self.save_checkpoint(
                        out / "checkpoints" / f"step_{self.step_count:06d}.npz")
        except TrainingDiverged:
            if out is not None:
                self.save_checkpoint(out / "checkpoints" / "diverged.npz")
            raise
        finally:
            if metrics_fh is not None:
                metrics_fh.close()
        if out is not None:
            self.save_checkpoint(out / "checkpoints" / "final.npz")
        report, tables = self.evaluate()
        summary = {"final_energy": report.to_dict(),
                   "steps": self.step_count}
        if out is not None:
            eval_dir = out / "eval"
            eval_dir.mkdir(exist_ok=True)
            with open(eval_dir / "energy.json", "w") as fh:
                json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            with open(eval_dir / "correlators.csv", "w") as fh:
                fh.write(estimators.correlators_to_csv(tables))
        return summary
