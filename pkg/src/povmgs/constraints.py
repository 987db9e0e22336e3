"""Momentum-resolved Gram-matrix positivity constraints.

A physical state assigns every operator pool the Gram matrix
M^(k)_ij = <O_i^(k)+ O_j^(k)> of its momentum components, and that
matrix is positive semidefinite.  A relaxed sampler's distribution need
not satisfy this, and energies estimated through the unphysical duals
will happily dive below the true ground state unless the negative
directions are detected and pushed back.

The detection runs on two disjoint halves of an inference-mode sample
buffer: eigenvectors come from the training half, Rayleigh quotients
through the validation half, and the spread between the two calibrates
how negative an eigenvalue must be before it counts as a violation
rather than shot noise.  Per momentum sector,

    tau_k = tau * P65(|lam_train - lam_val|),   s_k = s * P65(...),
    f(lam) = 1 / (1 + exp((lam + tau_k) / s_k)),

a Fermi step that switches on smoothly once lam_val drops below -tau_k.
The constraint loss re-evaluates the flagged directions on the
gradient-mode Gram and pushes their Rayleigh quotients up:

    L_psd = sum_k sum_a f(lam_val_ka) * (-Re v_ka+ M_grad^(k) v_ka).

Weights and eigenvectors are treated as constants of the step; gradients
flow only through M_grad.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import MomentumExpansion, SoftEval
from . import frame

_FLOOR = 1e-8  # lower bound for tau_k, s_k when halves agree exactly


@dataclass
class GramEstimate:
    """Stack of momentum-sector Gram matrices from one sample batch."""

    momenta: np.ndarray  # (K,) integer momentum indices m (k = 2 pi m / L)
    multiplicity: np.ndarray  # (K,) mirror-sector count folded into sums
    matrices: np.ndarray  # (K, D, D) complex Hermitian
    n_samples: int
    tag: str = ""


def split_halves(outcomes: np.ndarray, rng: np.random.Generator):
    """Shuffle and split a sample batch into two disjoint halves.

    An odd sample drops off the end; halving is the whole point, so the
    caller should send an even count.
    """
    outcomes = np.asarray(outcomes)
    n = outcomes.shape[0] // 2
    perm = rng.permutation(outcomes.shape[0])
    return outcomes[perm[:n]], outcomes[perm[n : 2 * n]]


def build_gram_hard(exp: MomentumExpansion, outcomes: np.ndarray,
                    weights: np.ndarray | None = None,
                    momenta: np.ndarray | None = None, tag: str = "",
                    workers: int = 1) -> GramEstimate:
    """Gram matrices from inference-mode (integer) outcome samples.

    ``weights`` optionally reweights samples; passing the exact outcome
    distribution over enumerated strings gives the exact Gram.
    """
    if momenta is None:
        momenta = exp.momenta
        mult = exp.multiplicity
    else:
        momenta = np.asarray(momenta)
        mult = np.ones(len(momenta))
    vals = exp.table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS, weights,
                                     workers=workers)
    mats = exp.gram(vals, momenta)
    return GramEstimate(np.asarray(momenta), mult, mats, len(outcomes), tag)


def build_gram_soft(exp: MomentumExpansion, site_table: np.ndarray,
                    tag: str = "grad") -> tuple[GramEstimate, SoftEval]:
    """Gram matrices from relaxed samples, keeping the evaluation object
    so the loss can be differentiated back to the site table."""
    ev = exp.table.eval_soft(site_table)
    mats = exp.gram(ev.mean(), exp.momenta)
    return GramEstimate(exp.momenta, exp.multiplicity, mats, site_table.shape[0], tag), ev


def nearest_rank_p65(x: np.ndarray) -> float:
    """65th percentile by the nearest-rank rule (ceil(0.65 n)-th smallest)."""
    x = np.sort(np.asarray(x).reshape(-1))
    k = int(np.ceil(0.65 * x.size)) - 1
    return float(x[k])


@dataclass
class SpectralData:
    """Eigen-decomposition of the training Gram validated on its twin."""

    momenta: np.ndarray
    multiplicity: np.ndarray
    lam_train: np.ndarray  # (K, D) ascending
    vectors: np.ndarray  # (K, D, D), column a is the a-th eigenvector
    lam_val: np.ndarray  # (K, D) Rayleigh quotients on the validation Gram
    dlam: np.ndarray  # (K, D) |lam_train - lam_val|
    tau_k: np.ndarray  # (K,)
    s_k: np.ndarray  # (K,)

    def fermi_weights(self) -> np.ndarray:
        return fermi_weight(self.lam_val, self.tau_k[:, None], self.s_k[:, None])


def validate_spectrum(m_train: GramEstimate, m_val: GramEstimate,
                      tau: float, s: float) -> SpectralData:
    """Diagonalize each momentum sector of M_train and score the
    eigenvectors on M_val; calibrate tau_k, s_k from the disagreement."""
    if tau <= 0 or s <= 0:
        raise ValueError("tau and s must be positive")
    lam_t, vecs = np.linalg.eigh(m_train.matrices)
    lam_v = np.real(np.einsum("kia,kij,kja->ka", np.conj(vecs), m_val.matrices, vecs,
                              optimize=True))
    dlam = np.abs(lam_t - lam_v)
    tau_k = np.maximum(tau * np.array([nearest_rank_p65(d) for d in dlam]), _FLOOR)
    s_k = np.maximum(s * np.array([nearest_rank_p65(d) for d in dlam]), _FLOOR)
    return SpectralData(m_train.momenta, m_train.multiplicity,
                        lam_t, vecs, lam_v, dlam, tau_k, s_k)


def fermi_weight(lam, tau_k, s_k):
    """f = 1 / (1 + exp((lam + tau_k) / s_k)), overflow-safe elementwise."""
    x = (np.asarray(lam, dtype=float) + tau_k) / s_k
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = np.exp(-x[pos]) / (1.0 + np.exp(-x[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(x[~pos]))
    return out


@dataclass
class ConstraintReport:
    """Step diagnostics for the positivity constraints."""

    psd_loss: float
    violation: float  # P = max Fermi weight over momenta and modes
    min_lam_val: np.ndarray  # (K,) most negative validated eigenvalue per sector
    n_active: int  # modes with f > 0.01
    tau_k: np.ndarray
    s_k: np.ndarray


def psd_loss(spectral: SpectralData, m_grad: GramEstimate):
    """Constraint loss on the gradient-mode Gram.

    Returns (loss, weight_mats, report); ``weight_mats`` is the stack
    K^(k) = sum_a f_ka v_ka v_ka+ whose pairing -Re Tr[K M] gives the
    loss, and whose adjoint drives the backward pass.  Mirror sectors
    enter through the stored multiplicities.
    """
    f = spectral.fermi_weights()
    vecs = spectral.vectors
    weight_mats = np.einsum("ka,kia,kja->kij", f, vecs, np.conj(vecs), optimize=True)
    per_k = -np.real(np.einsum("kij,kji->k", weight_mats, m_grad.matrices, optimize=True))
    loss = float(spectral.multiplicity @ per_k)
    report = ConstraintReport(
        psd_loss=loss,
        violation=float(f.max()),
        min_lam_val=spectral.lam_val.min(axis=1),
        n_active=int((f > 0.01).sum()),
        tau_k=spectral.tau_k,
        s_k=spectral.s_k,
    )
    return loss, weight_mats, report


def psd_backward(exp: MomentumExpansion, weight_mats: np.ndarray,
                 spectral: SpectralData, soft_eval: SoftEval) -> np.ndarray:
    """Gradient of the constraint loss w.r.t. the relaxed site table."""
    beta = exp.string_coefficients(weight_mats, spectral.momenta, spectral.multiplicity)
    return soft_eval.backward_mean(beta)


def gram_from_exact_values(exp: MomentumExpansion, string_values: np.ndarray,
                           momenta: np.ndarray | None = None,
                           tag: str = "exact") -> GramEstimate:
    """Gram matrices assembled from externally computed string
    expectations (the exact-diagonalization oracle path)."""
    if momenta is None:
        momenta = exp.momenta
        mult = exp.multiplicity
    else:
        momenta = np.asarray(momenta)
        mult = np.ones(len(momenta))
    mats = exp.gram(np.asarray(string_values, dtype=float), momenta)
    return GramEstimate(np.asarray(momenta), mult, mats, 0, tag)
