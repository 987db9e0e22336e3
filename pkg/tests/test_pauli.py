import numpy as np
import numpy.testing as npt
import pytest

from povmgs import frame, pauli


def dense(p: pauli.PauliString, size: int) -> np.ndarray:
    """Slow kron build of the full 2^size matrix, for cross-checks."""
    mats = [np.eye(2, dtype=complex)] * size
    for s, a in zip(p.sites, p.axes):
        mats[s] = frame.PAULI_MATRICES[a]
    out = np.array([[p.phase]])
    for m in mats:
        out = np.kron(out, m)
    return out


def test_parse_str_round_trip():
    for text in ["X0", "Z3", "X0 Z1", "Y2 X5 Z7", "I"]:
        p = pauli.parse_pauli(text)
        assert str(p) == text
    assert pauli.parse_pauli("I").weight == 0


def test_from_ops_sorts_sites():
    p = pauli.from_ops([(5, 1), (2, 3)])
    assert p.sites == (2, 5)
    assert p.axes == (3, 1)


def test_invalid_strings_rejected():
    with pytest.raises(ValueError):
        pauli.PauliString((1, 1), (1, 2))
    with pytest.raises(ValueError):
        pauli.PauliString((0,), (0,))
    with pytest.raises(ValueError):
        pauli.PauliString((0, 1), (1,))


def test_weight_and_reach():
    p = pauli.parse_pauli("X1 Z4")
    assert p.weight == 2
    assert p.reach == 4
    assert pauli.IDENTITY.reach == 0


def test_multiply_matches_matrices(rng):
    size = 3
    for _ in range(60):
        na, nb = rng.integers(0, size + 1, size=2)
        sa = tuple(sorted(rng.choice(size, na, replace=False)))
        sb = tuple(sorted(rng.choice(size, nb, replace=False)))
        a = pauli.PauliString(sa, tuple(rng.integers(1, 4, na)))
        b = pauli.PauliString(sb, tuple(rng.integers(1, 4, nb)))
        prod = pauli.multiply(a, b)
        npt.assert_allclose(dense(prod, size), dense(a, size) @ dense(b, size),
                            atol=1e-12)


def test_multiply_single_site_phases():
    x0 = pauli.parse_pauli("X0")
    y0 = pauli.parse_pauli("Y0")
    z0 = pauli.parse_pauli("Z0")
    assert pauli.multiply(x0, y0).phase == 1j
    assert pauli.multiply(y0, x0).phase == -1j
    assert pauli.multiply(x0, x0).key() == pauli.IDENTITY.key()
    assert pauli.multiply(z0, y0).phase == -1j
    assert pauli.multiply(z0, y0).axes == (1,)


def test_translate_wraps():
    p = pauli.parse_pauli("X0 Z1")
    q = pauli.translate(p, 7, 8)
    assert q.sites == (0, 7)
    assert q.axes == (3, 1)  # Z landed on site 0
    r = pauli.translate(q, 1, 8)
    assert r.key() == pauli.translate(p, 8, 8).key() == p.key()


def test_template_pools():
    p1 = pauli.generate_templates(1, 1)
    assert p1.dim == 3
    p2 = pauli.generate_templates(2, 2)
    assert p2.dim == 12
    keys = {t.key() for t in p2.templates}
    assert len(keys) == 12
    for t in p2.templates:
        assert t.weight <= 2 and t.reach <= 2
        assert min(t.sites) == 0  # anchored: translations enter via momentum
    with pytest.raises(ValueError):
        pauli.generate_templates(3, 3)


def brute_hard_means(table, outcomes):
    c = frame.DUAL_COEFFICIENTS
    out = np.zeros(len(table))
    for i, p in enumerate(table.strings):
        vals = np.ones(outcomes.shape[0])
        for s, a in zip(p.sites, p.axes):
            vals = vals * c[outcomes[:, s], a]
        out[i] = vals.mean()
    return out


def make_table(size, rng, n_strings=40):
    table = pauli.StringTable()
    for _ in range(n_strings):
        w = rng.integers(1, 5)
        sites = tuple(sorted(rng.choice(size, w, replace=False)))
        table.add(pauli.PauliString(sites, tuple(rng.integers(1, 4, w))))
    table.finalize(size)
    return table


def test_eval_hard_means_matches_brute_force(rng):
    size = 6
    table = make_table(size, rng)
    outcomes = rng.integers(0, 4, size=(500, size))
    got = table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS)
    npt.assert_allclose(got, brute_hard_means(table, outcomes), atol=1e-12)
    assert got[0] == 1.0


def test_eval_hard_means_weighted(rng):
    size = 4
    table = make_table(size, rng, n_strings=15)
    outcomes = rng.integers(0, 4, size=(200, size))
    w = rng.uniform(0.1, 2.0, size=200)
    got = table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS, weights=w)
    c = frame.DUAL_COEFFICIENTS
    for i, p in enumerate(table.strings):
        vals = np.ones(200)
        for s, a in zip(p.sites, p.axes):
            vals = vals * c[outcomes[:, s], a]
        npt.assert_allclose(got[i], np.average(vals, weights=w), atol=1e-12)


def test_eval_hard_means_worker_count_bitwise(rng):
    size = 8
    table = make_table(size, rng, n_strings=60)
    outcomes = rng.integers(0, 4, size=(300, size))
    a = table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS, workers=1)
    b = table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS, workers=4)
    assert np.array_equal(a, b)


def test_eval_soft_matches_hard_on_onehot(rng):
    size = 6
    table = make_table(size, rng)
    outcomes = rng.integers(0, 4, size=(100, size))
    y = np.zeros((100, size, 4))
    y[np.arange(100)[:, None], np.arange(size)[None, :], outcomes] = 1.0
    soft = table.eval_soft(frame.soft_site_values(y))
    npt.assert_allclose(soft.values.mean(axis=0),
                        table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS),
                        atol=1e-12)


def test_backward_mean_finite_difference(rng):
    size = 5
    table = make_table(size, rng, n_strings=25)
    n = 8
    site_table = rng.normal(size=(n, size, 4))
    coeff = rng.normal(size=len(table))

    def loss(st):
        return float(coeff @ table.eval_soft(st).values.mean(axis=0))

    grad = table.eval_soft(site_table).backward_mean(coeff).reshape(n, size, 4)
    eps = 1e-6
    for _ in range(12):
        i, l, a = rng.integers(0, n), rng.integers(0, size), rng.integers(0, 4)
        pert = site_table.copy()
        pert[i, l, a] += eps
        fd = (loss(pert) - loss(site_table)) / eps
        npt.assert_allclose(grad[i, l, a], fd, rtol=2e-4, atol=1e-8)


def test_momentum_multiplicity():
    mom, mult = pauli._momentum_multiplicity(8)
    npt.assert_array_equal(mom, [0, 1, 2, 3, 4])
    npt.assert_array_equal(mult, [1, 2, 2, 2, 1])
    mom9, mult9 = pauli._momentum_multiplicity(9)
    npt.assert_array_equal(mom9, [0, 1, 2, 3, 4])
    npt.assert_array_equal(mult9, [1, 2, 2, 2, 2])
    assert mult.sum() == 8 and mult9.sum() == 9


def test_gram_matches_entry_terms(rng):
    """Assembled Gram entries agree with the explicit per-entry string sums."""
    exp = pauli.gram_expansion(2, 2, 6)
    vals = rng.normal(size=len(exp.table))
    vals[0] = 1.0
    mats = exp.gram(vals, np.arange(4))
    for i, j, m in [(0, 0, 0), (1, 5, 2), (3, 3, 1), (7, 2, 3), (11, 4, 0)]:
        want = 0.0
        for c, p in exp.entry_terms(i, j, m):
            want = want + c * vals[exp.table.add(p)]
        # gram() hermitizes, so compare against the symmetrized expansion
        wantT = 0.0
        for c, p in exp.entry_terms(j, i, m):
            wantT = wantT + c * vals[exp.table.add(p)]
        npt.assert_allclose(mats[m, i, j], 0.5 * (want + np.conj(wantT)),
                            atol=1e-10)


def test_gram_hermitian(rng):
    exp = pauli.gram_expansion(2, 2, 8)
    vals = rng.normal(size=len(exp.table))
    mats = exp.gram(vals)
    npt.assert_allclose(mats, np.conj(np.swapaxes(mats, 1, 2)), atol=1e-12)
    assert mats.shape == (5, 12, 12)


def test_string_coefficients_adjoint(rng):
    """beta = string_coefficients(W) is the exact gradient of
    sum_k mult_k (-Re tr(W_k M_k)) in the string values."""
    exp = pauli.gram_expansion(2, 2, 6)
    vals = rng.normal(size=len(exp.table))
    w = rng.normal(size=(len(exp.momenta), 12, 12)) \
        + 1j * rng.normal(size=(len(exp.momenta), 12, 12))
    w = 0.5 * (w + np.conj(np.swapaxes(w, 1, 2)))

    def loss(v):
        mats = exp.gram(v)
        tr = np.einsum("kij,kji->k", w, mats).real
        return float(-(exp.multiplicity * tr).sum())

    beta = exp.string_coefficients(w)
    eps = 1e-6
    for s in rng.choice(len(exp.table), 10, replace=False):
        pert = vals.copy()
        pert[s] += eps
        fd = (loss(pert) - loss(vals)) / eps
        npt.assert_allclose(beta[s], fd, rtol=5e-5, atol=1e-9)


def test_gram_expansion_cached():
    a = pauli.gram_expansion(2, 2, 8)
    b = pauli.gram_expansion(2, 2, 8)
    assert a is b
