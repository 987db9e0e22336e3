"""Tetrahedral single-qubit POVM frame: effects, duals, and sample values.

The measurement on every site is the symmetric informationally complete
POVM whose four effects point at the vertices of a regular tetrahedron
inscribed in the Bloch sphere,

    E_a = (1/4) (I + n_a . sigma),        a = 0..3,

with unit vectors

    n_0 = ( 1,  1,  1)/sqrt(3),   n_1 = ( 1, -1, -1)/sqrt(3),
    n_2 = (-1,  1, -1)/sqrt(3),   n_3 = (-1, -1,  1)/sqrt(3).

The effects form an operator basis, so outcome probabilities determine
the state linearly.  The reconstruction uses the dual frame

    F_a = (1/2) (I + 3 n_a . sigma),      rho = sum_a p_a F_a,

whose Bloch vectors have length 3: a dual operator is *not* a state
(eigenvalues 2 and -1), which is what lets estimators built from it be
unbiased at the cost of single-shot values outside the physical range.

Expectation values of Pauli observables become table lookups.  With
c[a, p] = Tr[F_a sigma_p] (p = 0 the identity, 1..3 the Pauli axes),

    <sigma_p> = sum_a p_a c[a, p],        c[a, 0] = 1,  c[a, p] = 3 n_a^p,

and a product observable over several sites is estimated by the product
of per-site table values evaluated at the sampled outcomes.  Each
nontrivial factor contributes |c| = sqrt(3), so a weight-w Pauli string
has single-shot values of magnitude 3^(w/2) and estimator variance at
most 3^w/N <= 9^w/N from N samples.
"""

from __future__ import annotations

import numpy as np

# Bloch vectors of the four tetrahedral outcomes, rows n_a.
TETRA_VECTORS = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
) / np.sqrt(3.0)

# Pauli matrices, indexed 0..3 = I, X, Y, Z.
PAULI_MATRICES = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

# Dual-frame coefficient table c[a, p] = Tr[F_a sigma_p]; column 0 is the
# identity component (always 1), columns 1..3 equal 3 n_a.
DUAL_COEFFICIENTS = np.hstack([np.ones((4, 1)), 3.0 * TETRA_VECTORS])


def effect_matrix(a: int) -> np.ndarray:
    """Return the 2x2 POVM effect E_a = (I + n_a . sigma)/4."""
    if not 0 <= a <= 3:
        raise ValueError(f"outcome index must be 0..3, got {a}")
    n = TETRA_VECTORS[a]
    return 0.25 * (PAULI_MATRICES[0] + np.tensordot(n, PAULI_MATRICES[1:], axes=1))


def dual_matrix(a: int) -> np.ndarray:
    """Return the 2x2 dual-frame operator F_a = (I + 3 n_a . sigma)/2.

    Trace 1, but Bloch length 3: eigenvalues are 2 and -1, so F_a is not
    itself a state.  Tr[F_a F_b] = 6 delta_ab - 1.
    """
    if not 0 <= a <= 3:
        raise ValueError(f"outcome index must be 0..3, got {a}")
    n = TETRA_VECTORS[a]
    return 0.5 * (PAULI_MATRICES[0] + 3.0 * np.tensordot(n, PAULI_MATRICES[1:], axes=1))


def density_matrix(bloch: np.ndarray) -> np.ndarray:
    """Bloch vector -> 2x2 density matrix (I + r . sigma)/2."""
    bloch = np.asarray(bloch, dtype=float)
    return 0.5 * (PAULI_MATRICES[0] + np.tensordot(bloch, PAULI_MATRICES[1:], axes=1))


def probs_from_state(bloch: np.ndarray) -> np.ndarray:
    """Outcome distribution p_a = Tr[rho E_a] = (1 + r . n_a)/4.

    Raises ValueError for unphysical input (|r| > 1 beyond round-off),
    since a caller holding such a vector has already gone wrong.
    """
    bloch = np.asarray(bloch, dtype=float)
    norm = np.linalg.norm(bloch)
    if norm > 1.0 + 1e-10:
        raise ValueError(f"Bloch vector has length {norm:.6f} > 1")
    return 0.25 * (1.0 + TETRA_VECTORS @ bloch)


def reconstruct_qubit(probs: np.ndarray) -> np.ndarray:
    """Bloch vector of the dual-frame reconstruction sum_a p_a F_a.

    The input must be a distribution up to 1e-10 in normalization but is
    otherwise unrestricted: a vertex of the simplex reconstructs to Bloch
    length 3, far outside the physical ball.  Keeping such points
    representable is the whole reason the positivity constraints exist.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (4,):
        raise ValueError(f"expected 4 outcome probabilities, got shape {probs.shape}")
    if abs(probs.sum() - 1.0) > 1e-10:
        raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
    return 3.0 * (probs @ TETRA_VECTORS)


def tetra_bra_vectors() -> np.ndarray:
    """Return the (4, 2) array of Bloch eigenvectors |n_a> with
    E_a = (1/2) |n_a><n_a|.  Used by the oracle's outcome sampler."""
    out = np.empty((4, 2), dtype=np.complex128)
    for a, n in enumerate(TETRA_VECTORS):
        nx, ny, nz = n
        if nz > -0.9:
            v = np.array([1.0 + nz, nx + 1j * ny])
        else:
            v = np.array([nx - 1j * ny, 1.0 - nz])
        out[a] = v / np.linalg.norm(v)
    return out


def hard_site_values(outcomes: np.ndarray) -> np.ndarray:
    """Per-site dual-coefficient table for sampled outcomes.

    Parameters
    ----------
    outcomes : (N, L) integer array of POVM outcomes in 0..3.

    Returns
    -------
    (N, L, 4) array t with t[n, j, p] = c[outcomes[n, j], p]; column 0 is
    identically 1 so identity factors cost nothing downstream.
    """
    return DUAL_COEFFICIENTS[np.asarray(outcomes)]


def soft_site_values(y: np.ndarray) -> np.ndarray:
    """Relaxed-sample analogue of :func:`hard_site_values`.

    `y` has shape (N, L, 4) holding per-site outcome weights (rows of a
    tempered softmax).  Returns (N, L, 4) with entry [n, j, p] =
    sum_a y[n, j, a] c[a, p]; linear in y, so gradients pass through the
    coefficient table transposed.
    """
    return np.asarray(y) @ DUAL_COEFFICIENTS


def pauli_sample_value(outcomes: np.ndarray, pauli) -> float | complex:
    """Single-shot estimator value of a Pauli string at one outcome string.

    For a string P with support {(j, p)} and scalar phase, the value is
    phase * prod_j c[outcomes[j], p_j]; averaging over samples drawn from
    the POVM distribution of rho gives Tr[rho P] exactly.  Returns a float
    when the phase is real, complex otherwise.
    """
    outcomes = np.asarray(outcomes)
    val = 1.0
    for site, axis in zip(pauli.sites, pauli.axes):
        val *= DUAL_COEFFICIENTS[outcomes[site], axis]
    phase = pauli.phase
    if phase.imag == 0.0:
        return float(phase.real * val)
    return complex(phase * val)


def variance_bound(weight: int, n_samples: int) -> float:
    """Worst-case estimator variance 3^(2w)/N for a weight-w string.

    Loose by construction (it bounds the squared single-shot value by its
    maximum 3^w squared); the attained variance is at most 3^w/N because
    every per-site factor squares to exactly 3.
    """
    if weight < 0 or n_samples <= 0:
        raise ValueError("weight must be >= 0 and n_samples positive")
    return 3.0 ** (2 * weight) / n_samples


def sample_qubit_outcomes(bloch: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n tetrahedral outcomes from a single-qubit state."""
    p = probs_from_state(bloch)
    return rng.choice(4, size=n, p=p)
