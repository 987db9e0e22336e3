import numpy as np
import numpy.testing as npt
import pytest

from povmgs import frame, oracle, pauli


def test_tfim_two_site_ground_energy():
    # two-site ring merges both bonds into one 0.6 X0X1 term plus 0.3 Z
    # fields; the spectrum works out by hand to +-0.6 sqrt(2), +-0.6 with
    # ground energy -0.6 sqrt(2)
    st = oracle.ground_state(oracle.tfim(2))
    want = -0.6 * np.sqrt(2.0)
    # brute-force 4x4 diagonalization as the independent reference
    h = oracle.hamiltonian_matrix(oracle.tfim(2)).toarray()
    brute = np.linalg.eigvalsh(h)[0]
    npt.assert_allclose(st.energy, brute, atol=1e-12)
    npt.assert_allclose(brute, want, atol=1e-12)


def test_heisenberg_two_site_ground_energy():
    # ring doubles each bond: H = 0.6 (XX + YY + ZZ), singlet at -3 * 0.6
    st = oracle.ground_state(oracle.heisenberg(2))
    npt.assert_allclose(st.energy, -1.8, atol=1e-12)


def test_reference_energy_densities():
    vals = {
        "tfim": -0.38443696,
        "gapped_tfim": -0.63818128,
        "heisenberg": -0.54766387,
    }
    builders = {"tfim": oracle.tfim, "gapped_tfim": oracle.gapped_tfim,
                "heisenberg": oracle.heisenberg}
    for name, want in vals.items():
        st = oracle.ground_state(builders[name](8))
        npt.assert_allclose(st.energy_density, want, atol=5e-7)
        assert st.gap > 0.05
        assert not st.degenerate


def test_ground_state_is_eigenvector():
    spec = oracle.gapped_tfim(6)
    st = oracle.ground_state(spec)
    h = oracle.hamiltonian_matrix(spec)
    npt.assert_allclose(h @ st.amplitudes, st.energy * st.amplitudes, atol=1e-10)
    npt.assert_allclose(np.linalg.norm(st.amplitudes), 1.0, atol=1e-12)
    assert oracle.exact_energy_variance(st) < 1e-18


def test_ground_state_deterministic_phase():
    a = oracle.ground_state(oracle.heisenberg(6)).amplitudes
    b = oracle.ground_state(oracle.heisenberg(6)).amplitudes
    assert np.array_equal(a, b)


def test_custom_hamiltonian_round_trip():
    spec = oracle.custom(3, [(0.5, pauli.parse_pauli("Z0")),
                             (-0.25, pauli.parse_pauli("X0 X1"))])
    assert spec.size == 3
    coeffs = {str(t): c for c, t in spec.terms}
    assert coeffs == {"Z0": 0.5, "X0 X1": -0.25}
    with pytest.raises(ValueError):
        oracle.custom(2, [(1.0, pauli.parse_pauli("Z5"))])


def test_apply_pauli_matches_matrix(rng):
    size = 4
    vec = rng.normal(size=2**size) + 1j * rng.normal(size=2**size)
    vec /= np.linalg.norm(vec)
    for text in ["X0", "Y2", "Z3", "X1 Z2", "Y0 X3"]:
        p = pauli.parse_pauli(text)
        want = oracle.pauli_matrix(p, size) @ vec
        npt.assert_allclose(oracle.apply_pauli(p, vec, size), want, atol=1e-12)


def test_string_expectations_match_dense(rng):
    spec = oracle.heisenberg(5)
    st = oracle.ground_state(spec)
    strings = [pauli.parse_pauli(s) for s in ["Z0", "X1 X2", "Y0 Z3", "Z0 Z1 Z2"]]
    got = oracle.string_expectations(st, strings)
    for g, p in zip(got, strings):
        m = oracle.pauli_matrix(p, 5).toarray()
        want = np.vdot(st.amplitudes, m @ st.amplitudes)
        npt.assert_allclose(g, want.real, atol=1e-12)


def test_povm_distribution_normalized_and_reconstructs():
    """The 4^L outcome table is a probability distribution whose dual-frame
    averages reproduce the exact string expectations."""
    st = oracle.ground_state(oracle.tfim(3))
    dist = oracle.exact_povm_distribution(st)
    assert dist.min() >= -1e-15
    npt.assert_allclose(dist.sum(), 1.0, atol=1e-12)
    outcomes = oracle.enumerate_outcomes(3)
    table = pauli.StringTable()
    checks = [pauli.parse_pauli(s) for s in ["Z0", "X0 X1", "Z0 Z2", "Y1 Y2"]]
    ids = [table.add(p) for p in checks]
    table.finalize(3)
    means = table.eval_hard_means(outcomes, frame.DUAL_COEFFICIENTS, weights=dist)
    exact = oracle.string_expectations(st, checks)
    npt.assert_allclose(means[ids], exact, atol=1e-10)


def test_single_site_marginal_matches_bloch():
    st = oracle.ground_state(oracle.gapped_tfim(2))
    dist = oracle.exact_povm_distribution(st).reshape(4, 4)
    marg = dist.sum(axis=1)
    bloch = np.array([
        oracle.exact_expectation(st, pauli.PauliString((0,), (a,))).real
        for a in (1, 2, 3)
    ])
    npt.assert_allclose(marg, frame.probs_from_state(bloch), atol=1e-12)


def test_sample_exact_frequencies():
    """Sequential sampler agrees with the closed-form outcome table to 5 sigma."""
    st = oracle.ground_state(oracle.tfim(3))
    dist = oracle.exact_povm_distribution(st)
    n = 60_000
    rng = np.random.default_rng(7)
    out = oracle.sample_exact(st, n, rng, chunk=1000)
    codes = (out @ (4 ** np.arange(2, -1, -1))).astype(int)
    freq = np.bincount(codes, minlength=64) / n
    sigma = np.sqrt(dist * (1 - dist) / n)
    assert np.all(np.abs(freq - dist) < 5 * sigma + 1e-9)


def test_sample_exact_deterministic_given_seed():
    st = oracle.ground_state(oracle.heisenberg(4))
    a = oracle.sample_exact(st, 512, np.random.default_rng(3))
    b = oracle.sample_exact(st, 512, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_hamiltonian_squared_expansion():
    spec = oracle.gapped_tfim(4)
    terms = oracle.hamiltonian_squared_terms(spec)
    h = oracle.hamiltonian_matrix(spec).toarray()
    rebuilt = np.zeros_like(h)
    for c, p in terms:
        rebuilt = rebuilt + c * oracle.pauli_matrix(p, 4).toarray()
    npt.assert_allclose(rebuilt, h @ h, atol=1e-10)


def test_energy_variance_positive_off_eigenstate():
    spec = oracle.tfim(3)
    st = oracle.ground_state(spec)
    # mix in a bit of the flipped basis state to leave the eigenspace
    amps = st.amplitudes.copy()
    amps[0] += 0.3
    amps /= np.linalg.norm(amps)
    mixed = oracle.ExactState(spec, amps, st.energy, st.gap)
    assert oracle.exact_energy_variance(mixed) > 1e-4


def test_sparse_matches_dense_path():
    """Lanczos branch above the dense cutoff lands on the dense answer."""
    spec = oracle.tfim(11)
    h = oracle.hamiltonian_matrix(spec)
    dense_e0 = np.linalg.eigvalsh(h.toarray())[0]
    st = oracle.ground_state(spec)
    npt.assert_allclose(st.energy, dense_e0, atol=1e-8)
