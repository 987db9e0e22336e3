"""Pauli-string algebra on a ring, template pools, and momentum Gram expansions.

A Pauli string is a phase times a tensor product of single-site Pauli
operators on an L-site ring.  Everything downstream (energy estimation,
the positivity constraints, the exact oracle) reduces to evaluating
translation-related families of such strings, so this module also owns
the bookkeeping that makes those evaluations cheap:

* ``StringTable`` registers the distinct phase-free strings appearing in
  a computation once, grouped by weight and by support, and evaluates
  all of them from a batch of POVM samples in one vectorized pass.
* ``MomentumExpansion`` precomputes, for a template pool on a ring, the
  index structure of all operator products T_x(O_i) T_{x+d}(O_j) needed
  to assemble momentum-resolved Gram matrices from plain string
  expectation values, plus the reverse map from Gram-space gradients to
  per-string coefficients.

Axis convention: 0 = identity, 1 = X, 2 = Y, 3 = Z.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

AXIS_LABELS = "IXYZ"

# Single-qubit multiplication table: sigma_p sigma_q = phase * sigma_r,
# encoded as _PROD_AXIS[p, q] = r and _PROD_PHASE[p, q] = phase.
_PROD_AXIS = np.zeros((4, 4), dtype=np.int64)
_PROD_PHASE = np.ones((4, 4), dtype=np.complex128)
for _p in range(4):
    _PROD_AXIS[0, _p] = _PROD_AXIS[_p, 0] = _p
for _p, _q, _r in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
    _PROD_AXIS[_p, _q] = _r
    _PROD_PHASE[_p, _q] = 1j
    _PROD_AXIS[_q, _p] = _r
    _PROD_PHASE[_q, _p] = -1j


@dataclass(frozen=True)
class PauliString:
    """scalar phase times a product of single-site Paulis.

    ``sites`` are strictly increasing, ``axes`` the matching nonzero axis
    codes.  The empty support with phase 1 is the identity.
    """

    sites: tuple[int, ...]
    axes: tuple[int, ...]
    phase: complex = 1.0 + 0.0j

    def __post_init__(self):
        if len(self.sites) != len(self.axes):
            raise ValueError("sites and axes must have equal length")
        if any(self.sites[i] >= self.sites[i + 1] for i in range(len(self.sites) - 1)):
            raise ValueError("sites must be strictly increasing")
        if any(a not in (1, 2, 3) for a in self.axes):
            raise ValueError("axes must be in {1, 2, 3}")

    @property
    def weight(self) -> int:
        return len(self.sites)

    @property
    def reach(self) -> int:
        """Linear extent max(sites) - min(sites) + 1 (0 for the identity)."""
        if not self.sites:
            return 0
        return self.sites[-1] - self.sites[0] + 1

    def is_hermitian(self) -> bool:
        return self.phase.imag == 0.0

    def free(self) -> "PauliString":
        """The same string with phase stripped to +1."""
        return PauliString(self.sites, self.axes, 1.0 + 0.0j)

    def key(self) -> tuple:
        """Phase-free registry key."""
        return (self.sites, self.axes)

    def __str__(self):
        if not self.sites:
            body = "I"
        else:
            body = " ".join(f"{AXIS_LABELS[a]}{s}" for s, a in zip(self.sites, self.axes))
        ph = {1.0 + 0j: "", -1.0 + 0j: "-", 1j: "i ", -1j: "-i "}.get(self.phase)
        if ph is None:
            ph = f"({self.phase}) "
        return ph + body


IDENTITY = PauliString((), ())


def from_ops(ops, phase: complex = 1.0 + 0.0j) -> PauliString:
    """Build a string from an iterable of (site, axis) pairs in any order.

    Coinciding sites are not allowed here; use :func:`multiply` for that.
    """
    ops = sorted(ops)
    sites = tuple(s for s, _ in ops)
    if len(set(sites)) != len(sites):
        raise ValueError("duplicate sites; multiply strings instead")
    return PauliString(sites, tuple(a for _, a in ops), phase)


def parse_pauli(text: str) -> PauliString:
    """Parse strings like ``"X0 X1"`` or ``"Z3"`` (identity: ``"I"``)."""
    text = text.strip()
    if text in ("", "I"):
        return IDENTITY
    ops = []
    for tok in text.split():
        axis = AXIS_LABELS.find(tok[0].upper())
        if axis <= 0 or not tok[1:].isdigit():
            raise ValueError(f"cannot parse Pauli token {tok!r}")
        ops.append((int(tok[1:]), axis))
    return from_ops(ops)


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Operator product a.b with phase accumulation.

    Coinciding sites reduce through the single-qubit algebra (X Y = iZ
    and cyclic); a squared factor drops out of the support.
    """
    phase = a.phase * b.phase
    bmap = dict(zip(b.sites, b.axes))
    ops = []
    for s, p in zip(a.sites, a.axes):
        q = bmap.pop(s, 0)
        if q == 0:
            ops.append((s, p))
            continue
        phase *= _PROD_PHASE[p, q]
        r = _PROD_AXIS[p, q]
        if r != 0:
            ops.append((s, int(r)))
    ops.extend(bmap.items())
    ops.sort()
    return PauliString(tuple(s for s, _ in ops), tuple(p for _, p in ops), phase)


def translate(p: PauliString, shift: int, size: int) -> PauliString:
    """Translate by ``shift`` sites on a ring of ``size`` sites (periodic)."""
    if not p.sites:
        return p
    if p.sites[-1] >= size:
        raise ValueError(f"string acts on site {p.sites[-1]} outside ring of {size}")
    ops = sorted(((s + shift) % size, a) for s, a in zip(p.sites, p.axes))
    return PauliString(tuple(s for s, _ in ops), tuple(a for _, a in ops), p.phase)


@dataclass(frozen=True)
class TemplatePool:
    """Translation templates anchored at site 0.

    ``max_weight`` = 1 keeps the three single-site Paulis; 2 adds all
    two-site axis pairs at separations 1..max_range-1.  Pool dimension is
    3 for (1, *) and 3 + 9 (R - 1) for (2, R).
    """

    max_weight: int
    max_range: int
    templates: tuple[PauliString, ...]

    @property
    def dim(self) -> int:
        return len(self.templates)


def generate_templates(max_weight: int, max_range: int) -> TemplatePool:
    """Enumerate pool templates in canonical order.

    Single-site X, Y, Z at site 0 first; then for each separation
    d = 1..max_range-1 the nine ordered axis pairs (site 0, site d) in
    lexicographic order.
    """
    if max_weight not in (1, 2):
        raise ValueError("max_weight must be 1 or 2")
    if max_weight == 2 and max_range < 2:
        raise ValueError("max_range must be >= 2 for two-site templates")
    if max_range < 1:
        raise ValueError("max_range must be >= 1")
    templates = [PauliString((0,), (p,)) for p in (1, 2, 3)]
    if max_weight == 2:
        for d in range(1, max_range):
            for p in (1, 2, 3):
                for q in (1, 2, 3):
                    templates.append(PauliString((0, d), (p, q)))
    return TemplatePool(max_weight, max_range, tuple(templates))


class StringTable:
    """Registry of distinct phase-free Pauli strings with vectorized access.

    ``add`` interns a string and returns its integer id.  ``finalize``
    freezes the table and builds the index arrays used by the evaluation
    helpers.  Entry 0 is always available for the identity string, whose
    value is 1 for every sample.
    """

    def __init__(self):
        self._index: dict[tuple, int] = {}
        self.strings: list[PauliString] = []
        self._frozen = False
        self.add(IDENTITY)

    def add(self, p: PauliString) -> int:
        key = p.free().key()
        idx = self._index.get(key)
        if idx is None:
            if self._frozen:
                raise RuntimeError("table already finalized")
            idx = len(self.strings)
            self._index[key] = idx
            self.strings.append(p.free())
        return idx

    def __len__(self):
        return len(self.strings)

    def finalize(self, size: int) -> None:
        """Freeze and build per-weight gather indices and per-support
        histogram plans for a ring of ``size`` sites."""
        self._frozen = True
        self.size = size
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(self.strings):
            if s.weight:
                groups.setdefault(s.weight, []).append(i)
        self.weight_groups = []
        for w in sorted(groups):
            ids = np.array(groups[w], dtype=np.int64)
            sites = np.array([self.strings[i].sites for i in ids], dtype=np.int64)
            axes = np.array([self.strings[i].axes for i in ids], dtype=np.int64)
            flat = sites * 4 + axes  # column index into a (N, L*4) value table
            self.weight_groups.append(
                {"w": w, "ids": ids, "sites": sites, "axes": axes, "flat": flat,
                 "scatter": _scatter_matrix(flat, size * 4)}
            )
        # histogram plan: strings grouped by their support tuple
        supports: dict[tuple, list[int]] = {}
        for i, s in enumerate(self.strings):
            if s.weight:
                supports.setdefault(s.sites, []).append(i)
        self.support_groups = []
        for sup, ids in sorted(supports.items()):
            m = len(sup)
            ids = np.array(ids, dtype=np.int64)
            # base-3 member index within the (3,)*m tensor of axis combos
            digits = np.array([self.strings[i].axes for i in ids], dtype=np.int64) - 1
            member = digits @ (3 ** np.arange(m - 1, -1, -1, dtype=np.int64))
            code_weights = 4 ** np.arange(m - 1, -1, -1, dtype=np.int64)
            self.support_groups.append(
                {"sites": np.array(sup, dtype=np.int64), "ids": ids,
                 "member": member, "code_weights": code_weights}
            )

    # -- evaluation -----------------------------------------------------

    def eval_hard_means(self, outcomes: np.ndarray, coeff_table: np.ndarray,
                        weights: np.ndarray | None = None,
                        workers: int = 1) -> np.ndarray:
        """Mean estimator value of every table string over outcome samples.

        Goes through per-support joint outcome histograms, so the cost is
        O(#supports * N) regardless of how many axis combinations share a
        support.  ``weights`` (optional, normalized internally) turns the
        sample mean into a weighted mean; pass the exact distribution over
        all 4^L outcome strings for a sample-free evaluation.

        ``workers`` > 1 fans the per-support work out over threads; each
        support owns disjoint output slots, so the result is bitwise
        independent of the worker count.

        Returns a float array of shape (len(self),) with entry 0 (the
        identity) equal to 1.
        """
        outcomes = np.asarray(outcomes)
        n = outcomes.shape[0]
        if weights is None:
            wsum = float(n)
        else:
            weights = np.asarray(weights, dtype=float)
            wsum = float(weights.sum())
        out = np.empty(len(self), dtype=float)
        out[0] = 1.0
        c3 = coeff_table[:, 1:]  # (4, 3): axis columns only

        def one_support(grp):
            m = len(grp["sites"])
            codes = outcomes[:, grp["sites"]] @ grp["code_weights"]
            hist = np.bincount(codes, weights=weights, minlength=4 ** m) / wsum
            t = hist.reshape((4,) * m)
            for _ in range(m):
                # contract leading outcome axis with the coefficient table;
                # after m steps axes are (3,)*m in original site order
                t = np.tensordot(t, c3, axes=([0], [0]))
            out[grp["ids"]] = t.reshape(-1)[grp["member"]]

        if workers > 1 and len(self.support_groups) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(one_support, self.support_groups))
        else:
            for grp in self.support_groups:
                one_support(grp)
        return out

    def eval_soft(self, site_table: np.ndarray) -> "SoftEval":
        """Evaluate every string on relaxed per-site value tables.

        ``site_table`` has shape (N, L, 4) (see frame.soft_site_values).
        Returns a :class:`SoftEval` holding per-sample values and the
        gathered factors needed for the backward pass.
        """
        n = site_table.shape[0]
        flat_table = site_table.reshape(n, -1)
        values = np.empty((n, len(self)), dtype=site_table.dtype)
        values[:, 0] = 1.0
        gathered = []
        for grp in self.weight_groups:
            g = flat_table[:, grp["flat"].reshape(-1)].reshape(n, *grp["flat"].shape)
            values[:, grp["ids"]] = g.prod(axis=2)
            gathered.append(g)
        return SoftEval(self, values, gathered)


def _scatter_matrix(flat: np.ndarray, width: int) -> np.ndarray:
    """0/1 matrix sending per-(string, factor) contributions into
    per-(site, axis) slots; the scatter-add becomes a single matmul."""
    cols = flat.reshape(-1)
    mat = np.zeros((cols.size, width), dtype=float)
    mat[np.arange(cols.size), cols] = 1.0
    return mat


class SoftEval:
    """Result of :meth:`StringTable.eval_soft` plus its backward pass."""

    def __init__(self, table: StringTable, values: np.ndarray, gathered: list):
        self.table = table
        self.values = values  # (N, E) per-sample string values
        self._gathered = gathered

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def backward_mean(self, coeff: np.ndarray) -> np.ndarray:
        """Gradient of sum_s coeff[s] * mean_n(values[n, s]) w.r.t. the
        site table.  Returns (N, L, 4)."""
        n = self.values.shape[0]
        l = self.table.size
        dflat = np.zeros((n, l * 4), dtype=float)
        for grp, g in zip(self.table.weight_groups, self._gathered):
            w = grp["w"]
            c = coeff[grp["ids"]] / n  # (E_w,)
            if w == 1:
                contrib = np.broadcast_to(c[None, :, None], g.shape)
            elif w == 2:
                contrib = c[None, :, None] * g[:, :, ::-1]
            elif w == 3:
                contrib = np.empty_like(g)
                contrib[:, :, 0] = g[:, :, 1] * g[:, :, 2]
                contrib[:, :, 1] = g[:, :, 0] * g[:, :, 2]
                contrib[:, :, 2] = g[:, :, 0] * g[:, :, 1]
                contrib *= c[None, :, None]
            elif w == 4:
                g01 = g[:, :, 0] * g[:, :, 1]
                g23 = g[:, :, 2] * g[:, :, 3]
                contrib = np.empty_like(g)
                contrib[:, :, 0] = g[:, :, 1] * g23
                contrib[:, :, 1] = g[:, :, 0] * g23
                contrib[:, :, 2] = g01 * g[:, :, 3]
                contrib[:, :, 3] = g01 * g[:, :, 2]
                contrib *= c[None, :, None]
            else:
                # partner products via prefix/suffix cumulative products
                pre = np.ones_like(g)
                pre[:, :, 1:] = np.cumprod(g[:, :, :-1], axis=2)
                suf = np.ones_like(g)
                suf[:, :, :-1] = np.cumprod(g[:, :, :0:-1], axis=2)[:, :, ::-1]
                contrib = c[None, :, None] * pre * suf
            dflat += contrib.reshape(n, -1) @ grp["scatter"]
        return dflat.reshape(n, l, 4)


def _momentum_multiplicity(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Momenta m = 0..floor(L/2) with mirror multiplicities.

    Gram estimates at m and L-m built from the same samples are exact
    transposes, so spectra and loss terms coincide; interior momenta
    therefore count twice.
    """
    half = size // 2
    m = np.arange(half + 1)
    mult = np.where((m == 0) | (2 * m == size), 1.0, 2.0)
    return m, mult


class MomentumExpansion:
    """Index structure turning string expectations into momentum Grams.

    For pool templates O_1..O_D on an L-ring, the momentum-k Gram matrix

        M^(k)_ij = (1/L) sum_{x,y} exp(i k (y-x)) <T_x(O_i) T_y(O_j)>

    groups into separations d = y - x.  Each product O_i T_d(O_j)
    reduces to a phase times a phase-free string, and the x-sum becomes a
    translation average of that string's expectation value.  The
    constructor multiplies everything out once; ``gram`` then assembles
    all requested momenta from a vector of string expectations, and
    ``string_coefficients`` maps Gram-space gradient weights back onto
    the strings.
    """

    def __init__(self, pool: TemplatePool, size: int):
        if pool.max_range > size:
            raise ValueError("pool range exceeds ring size")
        self.pool = pool
        self.size = size
        d = pool.dim
        self.table = StringTable()
        self.string_idx = np.empty((d, d, size, size), dtype=np.int64)
        self.phase = np.empty((d, d, size), dtype=np.complex128)
        for i, oi in enumerate(pool.templates):
            for j, oj in enumerate(pool.templates):
                for sep in range(size):
                    prod = multiply(oi, translate(oj, sep, size))
                    self.phase[i, j, sep] = prod.phase
                    base = prod.free()
                    for x in range(size):
                        self.string_idx[i, j, sep, x] = self.table.add(
                            translate(base, x, size)
                        )
        self.table.finalize(size)
        self.momenta, self.multiplicity = _momentum_multiplicity(size)
        # exp(i k d) for every momentum index m and separation d
        angles = 2.0 * np.pi * np.outer(np.arange(size), np.arange(size)) / size
        self._expmat = np.exp(1j * angles)

    @property
    def dim(self) -> int:
        return self.pool.dim

    def gram(self, string_values: np.ndarray, momenta: np.ndarray | None = None) -> np.ndarray:
        """Assemble Gram matrices for the given momentum indices.

        ``string_values`` is the (E,) vector of expectation values of the
        table strings.  Returns (K, D, D) complex, Hermitized; with exact
        translation-averaged inputs the estimate is already Hermitian and
        the symmetrization only removes round-off.
        """
        if momenta is None:
            momenta = self.momenta
        sep_avg = self.phase * string_values[self.string_idx].mean(axis=3)
        exps = self._expmat[np.asarray(momenta) % self.size]
        mats = np.einsum("kd,ijd->kij", exps, sep_avg, optimize=True)
        return 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))

    def string_coefficients(self, weight_mats: np.ndarray,
                            momenta: np.ndarray | None = None,
                            multiplicity: np.ndarray | None = None) -> np.ndarray:
        """Adjoint of :meth:`gram` for losses of the form
        sum_k mult_k * (-Re Tr[W^(k) M^(k)]).

        Returns the (E,) coefficient vector beta with
        d loss / d string_values[s] = beta[s].
        """
        if momenta is None:
            momenta = self.momenta
        if multiplicity is None:
            multiplicity = self.multiplicity
        exps = self._expmat[np.asarray(momenta) % self.size]
        # translation average A is real and enters as M_ij = sum_d e^(ikd) phase_ijd A_ijd,
        # so d(-Re Tr[W M])/dA[i,j,d] = -Re[W_ji e^(ikd) phase_ijd]
        w_t = np.swapaxes(weight_mats, 1, 2) * np.asarray(multiplicity)[:, None, None]
        grad_sep = -np.real(
            np.einsum("kd,kij->ijd", exps, w_t, optimize=True) * self.phase
        )
        beta = np.bincount(
            self.string_idx.reshape(-1),
            weights=np.broadcast_to(
                (grad_sep / self.size)[..., None], self.string_idx.shape
            ).reshape(-1),
            minlength=len(self.table),
        )
        return beta

    def entry_terms(self, i: int, j: int, m: int) -> list[tuple[complex, PauliString]]:
        """Explicit expansion of M^(m)_ij as sum of coeff * string.

        Returns deduplicated (complex coefficient, phase-free string)
        pairs; mainly for cross-checks against dense matrix algebra.
        """
        acc: dict[int, complex] = {}
        for sep in range(self.size):
            w = self._expmat[m % self.size, sep] * self.phase[i, j, sep] / self.size
            for x in range(self.size):
                idx = int(self.string_idx[i, j, sep, x])
                acc[idx] = acc.get(idx, 0.0) + w
        return [(c, self.table.strings[idx]) for idx, c in sorted(acc.items())]


@lru_cache(maxsize=8)
def gram_expansion(max_weight: int, max_range: int, size: int) -> MomentumExpansion:
    """Cached MomentumExpansion for a (weight, range) pool on an L-ring."""
    return MomentumExpansion(generate_templates(max_weight, max_range), size)
