"""Exact small-system reference: diagonalization, POVM sampling, expectations.

Everything the variational pipeline estimates stochastically is computed
here exactly (or to eigensolver precision) for rings small enough to
hold the full state vector.  Dense eigendecomposition up to 10 sites,
Lanczos beyond; the exact tetrahedral-POVM outcome distribution is
tabulated for up to 8 sites, and arbitrarily many outcome strings can be
drawn without the table through sequential per-site conditionals.

Basis convention: computational index b has site 0 in the most
significant bit, matching C-order reshape of the amplitude vector to
shape (2,)*L with axis j belonging to site j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import frame
from .pauli import PauliString, from_ops, multiply, translate

_DENSE_LIMIT = 10  # sites; above this, use Lanczos
_TABLE_LIMIT = 8  # sites; full 4^L outcome table
_SAMPLE_LIMIT = 10  # sites; sequential sampler state size


@dataclass(frozen=True)
class HamiltonianSpec:
    """A translation-invariant ring Hamiltonian as a list of weighted strings."""

    name: str
    size: int
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        for coeff, term in self.terms:
            if not term.is_hermitian():
                raise ValueError(f"non-Hermitian term {term}")
            if term.sites and term.sites[-1] >= self.size:
                raise ValueError(f"term {term} outside ring of {self.size}")


def _ring_sum(size: int, coeff: float, template: PauliString):
    """coeff * sum_x T_x(template) as a term list, merging duplicates.

    On a 2-site ring the two translates of a nearest-neighbour bond
    coincide, which doubles that coefficient; that is the correct
    periodic Hamiltonian, not an artifact.
    """
    acc: dict[tuple, float] = {}
    reps: dict[tuple, PauliString] = {}
    for x in range(size):
        t = translate(template, x, size)
        key = t.key()
        acc[key] = acc.get(key, 0.0) + coeff * t.phase.real
        reps[key] = t.free()
    return [(c, reps[k]) for k, c in acc.items()]


def tfim(size: int) -> HamiltonianSpec:
    """Critical transverse-field Ising ring: 0.3 sum XX + 0.3 sum Z."""
    terms = _ring_sum(size, 0.3, from_ops([(0, 1), (1, 1)]))
    terms += _ring_sum(size, 0.3, from_ops([(0, 3)]))
    return HamiltonianSpec("tfim", size, tuple(terms))


def gapped_tfim(size: int) -> HamiltonianSpec:
    """Off-critical Ising ring: 0.3 sum XX + 0.6 sum Z (paramagnetic, gapped)."""
    terms = _ring_sum(size, 0.3, from_ops([(0, 1), (1, 1)]))
    terms += _ring_sum(size, 0.6, from_ops([(0, 3)]))
    return HamiltonianSpec("gapped_tfim", size, tuple(terms))


def heisenberg(size: int) -> HamiltonianSpec:
    """Antiferromagnetic Heisenberg ring: 0.3 sum (XX + YY + ZZ)."""
    terms: list = []
    for axis in (1, 2, 3):
        terms += _ring_sum(size, 0.3, from_ops([(0, axis), (1, axis)]))
    return HamiltonianSpec("heisenberg", size, tuple(terms))


def custom(size: int, weighted_terms) -> HamiltonianSpec:
    """Hamiltonian from explicit (coeff, PauliString) pairs (no ring sum)."""
    return HamiltonianSpec("custom", size, tuple(weighted_terms))


PRESETS = {"tfim": tfim, "gapped_tfim": gapped_tfim, "heisenberg": heisenberg}


_SPARSE_PAULI = {
    0: sp.identity(2, format="csr", dtype=np.complex128),
    1: sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=np.complex128)),
    2: sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=np.complex128)),
    3: sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=np.complex128)),
}


def pauli_matrix(p: PauliString, size: int) -> sp.csr_matrix:
    """Sparse 2^L x 2^L matrix of a Pauli string (site 0 leftmost in kron)."""
    axes = dict(zip(p.sites, p.axes))
    mat = _SPARSE_PAULI[axes.get(0, 0)]
    for j in range(1, size):
        mat = sp.kron(mat, _SPARSE_PAULI[axes.get(j, 0)], format="csr")
    return (p.phase * mat).tocsr()


def hamiltonian_matrix(spec: HamiltonianSpec) -> sp.csr_matrix:
    mats = [coeff * pauli_matrix(term, spec.size) for coeff, term in spec.terms]
    out = mats[0]
    for m in mats[1:]:
        out = out + m
    return out.tocsr()


@dataclass
class ExactState:
    """Ground state of a HamiltonianSpec with basic spectral metadata."""

    spec: HamiltonianSpec
    amplitudes: np.ndarray  # (2^L,) complex, unit norm, first big amp positive real
    energy: float
    gap: float  # E_1 - E_0; near-zero flags a degenerate ground space
    degenerate: bool = field(default=False)

    @property
    def size(self) -> int:
        return self.spec.size

    @property
    def energy_density(self) -> float:
        return self.energy / self.size


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec)))
    ph = vec[idx] / abs(vec[idx])
    out = vec / ph
    return out / np.linalg.norm(out)


def ground_state(spec: HamiltonianSpec) -> ExactState:
    """Diagonalize and return the ground state.

    Dense eigh through 10 sites; Lanczos with a fixed deterministic start
    vector beyond.  The returned amplitude vector has its largest entry
    rotated to the positive real axis so repeated calls agree exactly.
    """
    h = hamiltonian_matrix(spec)
    dim = h.shape[0]
    if spec.size <= _DENSE_LIMIT:
        evals, evecs = np.linalg.eigh(h.toarray())
        e0, e1 = float(evals[0]), float(evals[1])
        vec = evecs[:, 0]
    else:
        v0 = np.full(dim, 1.0 / math.sqrt(dim))
        evals, evecs = spla.eigsh(h, k=2, which="SA", v0=v0, maxiter=5000)
        order = np.argsort(evals)
        e0, e1 = float(evals[order[0]]), float(evals[order[1]])
        vec = evecs[:, order[0]]
    vec = _fix_phase(vec.astype(np.complex128))
    resid = float(np.linalg.norm(h @ vec - e0 * vec))
    if resid > 1e-8 * max(1.0, abs(e0)):
        raise RuntimeError(f"eigensolver residual {resid:.2e} too large")
    gap = e1 - e0
    return ExactState(spec, vec, e0, gap, degenerate=gap < 1e-10)


def apply_pauli(p: PauliString, vec: np.ndarray, size: int) -> np.ndarray:
    """P |psi> for a state vector of 2^L amplitudes."""
    out = vec.reshape((2,) * size)
    for site, axis in zip(p.sites, p.axes):
        mat = _SPARSE_PAULI[axis].toarray()
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [site])), 0, site)
    return p.phase * out.reshape(-1)


def exact_expectation(state: ExactState | np.ndarray, p: PauliString,
                      size: int | None = None) -> complex:
    """<psi| P |psi> for a PauliString."""
    if isinstance(state, ExactState):
        vec, size = state.amplitudes, state.size
    else:
        vec = state
        if size is None:
            size = int(round(math.log2(vec.shape[0])))
    return complex(np.vdot(vec, apply_pauli(p, vec, size)))


def string_expectations(state: ExactState, strings) -> np.ndarray:
    """Expectation of each string; real parts (callers pass Hermitian sets)."""
    vec, size = state.amplitudes, state.size
    return np.array(
        [exact_expectation(vec, s, size).real for s in strings], dtype=float
    )


def exact_energy_variance(state: ExactState) -> float:
    """<H^2> - <H>^2 from the sparse matrix (zero for a true eigenstate)."""
    h = hamiltonian_matrix(state.spec)
    hv = h @ state.amplitudes
    return float(np.real(np.vdot(hv, hv)) - np.real(np.vdot(state.amplitudes, hv)) ** 2)


def exact_correlators(state: ExactState, axis: int) -> np.ndarray:
    """Reference table v[0] = <P_0>, v[j] = <P_0 P_j> for one Pauli axis."""
    out = np.empty(state.size)
    out[0] = exact_expectation(state, PauliString((0,), (axis,))).real
    for j in range(1, state.size):
        out[j] = exact_expectation(state, PauliString((0, j), (axis, axis))).real
    return out


def exact_povm_distribution(state: ExactState) -> np.ndarray:
    """Full 4^L outcome distribution of the product tetrahedral POVM.

    Effects are rank one, E_a = (1/2) |n_a><n_a|, so the joint
    probability factorizes into per-site bra contractions:
    p(i_1..i_L) = 2^-L |<n_{i_1}| ... <n_{i_L}| psi>|^2.  Outcome strings
    index the flattened array with site 0 in the most significant digit.
    """
    size = state.size
    if size > _TABLE_LIMIT:
        raise ValueError(f"outcome table for {size} sites would hold 4^{size} entries")
    bras = np.conj(frame.tetra_bra_vectors())  # (4, 2)
    amp = state.amplitudes.reshape((2,) * size)
    for j in range(size):
        amp = np.moveaxis(np.tensordot(bras, amp, axes=([1], [j])), 0, j)
    return np.abs(amp.reshape(-1)) ** 2 / 2.0**size


def enumerate_outcomes(size: int) -> np.ndarray:
    """All 4^L outcome strings, ordered to match exact_povm_distribution."""
    idx = np.arange(4**size)
    out = np.empty((4**size, size), dtype=np.int64)
    for j in range(size - 1, -1, -1):
        out[:, j] = idx % 4
        idx //= 4
    return out


def sample_exact(state: ExactState, n: int, rng: np.random.Generator,
                 chunk: int = 4096) -> np.ndarray:
    """Draw POVM outcome strings from the exact state, site by site.

    Keeps one partial amplitude vector per sample whose squared norm is
    the joint probability of the prefix, halving its length at each site;
    memory is O(chunk * 2^L).
    """
    size = state.size
    if size > _SAMPLE_LIMIT:
        raise ValueError(f"sequential sampler limited to {_SAMPLE_LIMIT} sites")
    bras = np.conj(frame.tetra_bra_vectors()) / math.sqrt(2.0)  # (4, 2)
    out = np.empty((n, size), dtype=np.int8)
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        partial = np.broadcast_to(state.amplitudes, (m, 2**size)).copy()
        for j in range(size):
            cand = np.einsum("as,nsr->nar", bras, partial.reshape(m, 2, -1))
            w = np.square(np.abs(cand)).sum(axis=2)  # (m, 4) joint probs
            w /= w.sum(axis=1, keepdims=True)
            u = rng.random(m)
            choice = (u[:, None] > np.cumsum(w, axis=1)).sum(axis=1)
            choice = np.minimum(choice, 3)
            out[lo : lo + m, j] = choice
            partial = cand[np.arange(m), choice]
    return out


def hamiltonian_squared_terms(spec: HamiltonianSpec) -> tuple[tuple[float, PauliString], ...]:
    """Symbolic expansion of H^2 as weighted Hermitian strings.

    Cross terms with imaginary phases cancel pairwise in the symmetric
    double sum; the result carries real coefficients only.
    """
    acc: dict[tuple, complex] = {}
    reps: dict[tuple, PauliString] = {}
    for ca, ta in spec.terms:
        for cb, tb in spec.terms:
            prod = multiply(ta, tb)
            key = prod.free().key()
            acc[key] = acc.get(key, 0.0) + ca * cb * prod.phase
            reps[key] = prod.free()
    out = []
    for key, coeff in acc.items():
        if abs(coeff.imag) > 1e-12 * max(1.0, abs(coeff.real)):
            raise RuntimeError(f"H^2 expansion produced non-Hermitian weight {coeff}")
        if abs(coeff.real) > 1e-14:
            out.append((float(coeff.real), reps[key]))
    return tuple(out)
