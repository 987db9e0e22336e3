import numpy as np
import numpy.testing as npt
import pytest

from povmgs.model import DualStreamModel, gumbel_noise


def joint_probs(model, size):
    """Enumerate the full 4^size joint distribution teacher-forced."""
    from povmgs.oracle import enumerate_outcomes
    outcomes = enumerate_outcomes(size)
    logits = model.conditional_logits(outcomes)
    shifted = logits - logits.max(axis=2, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    rows = np.arange(outcomes.shape[0])[:, None]
    picked = logp[rows, np.arange(size)[None, :], outcomes]
    return np.exp(picked.sum(axis=1))


def test_constructor_validation():
    with pytest.raises(ValueError):
        DualStreamModel(0, 8, 1)
    with pytest.raises(ValueError):
        DualStreamModel(4, 0, 1)
    with pytest.raises(ValueError):
        DualStreamModel(4, 8, 0)


def test_zero_params_cell_halves_hidden(rng):
    m = DualStreamModel(4, 6, 1, dual_stream=False, seed=0)
    for name in m.params:
        m.params[name][:] = 0.0
    h = rng.normal(size=(3, 6))
    x = rng.normal(size=(3, 4))
    h_new, z, r, c = m._cell_forward("uni", 0, x, h)
    # zero weights: z = r = 1/2, candidate = 0, so the state halves
    npt.assert_allclose(z, 0.5, atol=1e-15)
    npt.assert_allclose(h_new, h / 2.0, atol=1e-15)


def test_joint_distribution_normalized():
    for dual in (True, False):
        m = DualStreamModel(3, 8, 2, dual_stream=dual, seed=5)
        p = joint_probs(m, 3)
        assert p.min() > 0
        npt.assert_allclose(p.sum(), 1.0, atol=1e-12)


def test_sample_inference_logp_consistent(rng):
    m = DualStreamModel(5, 8, 2, seed=3)
    out, logp = m.sample_inference(64, rng)
    logits = m.conditional_logits(out)
    shifted = logits - logits.max(axis=2, keepdims=True)
    ref = shifted - np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    rows = np.arange(64)[:, None]
    want = ref[rows, np.arange(5)[None, :], out].sum(axis=1)
    npt.assert_allclose(logp, want, atol=1e-10)


def test_sample_inference_matches_joint_distribution(rng):
    """Ancestral sampling frequencies agree with the enumerated joint."""
    m = DualStreamModel(2, 6, 1, seed=9)
    p = joint_probs(m, 2)
    n = 50_000
    out, _ = m.sample_inference(n, rng)
    codes = out[:, 0] * 4 + out[:, 1]
    freq = np.bincount(codes, minlength=16) / n
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) < 5 * sigma + 1e-9)


def test_forward_logits_match_teacher_forcing():
    m = DualStreamModel(5, 8, 2, seed=1)
    prefix = np.array([2, 0, 3])
    got = m.forward_logits(prefix)
    full = np.array([[2, 0, 3, 1, 1]])
    want = m.conditional_logits(full)[0, 3]
    npt.assert_allclose(got, want, atol=1e-12)
    with pytest.raises(ValueError):
        m.forward_logits(np.zeros(5, dtype=int))


def test_gumbel_st_reproducible_and_normalized(rng):
    m = DualStreamModel(4, 6, 2, seed=2)
    noise = gumbel_noise(rng.random((32, 4, 4)))
    out1, tape1 = m.sample_gumbel_st(32, 0.7, rng, noise=noise)
    out2, tape2 = m.sample_gumbel_st(32, 0.7, rng, noise=noise)
    assert np.array_equal(out1, out2)
    npt.assert_allclose(tape1.y, tape2.y, atol=0)
    npt.assert_allclose(tape1.y.sum(axis=2), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        m.sample_gumbel_st(4, 0.0, rng)


def test_gumbel_st_hard_limit(rng):
    # at very low temperature the relaxed weights collapse onto the choice
    m = DualStreamModel(3, 6, 1, seed=4)
    noise = gumbel_noise(rng.random((16, 3, 4)))
    out, tape = m.sample_gumbel_st(16, 2e-4, rng, noise=noise)
    onehot = np.zeros_like(tape.y)
    rows = np.arange(16)[:, None]
    onehot[rows, np.arange(3)[None, :], out] = 1.0
    npt.assert_allclose(tape.y, onehot, atol=1e-10)


@pytest.mark.parametrize("dual", [True, False])
def test_backward_finite_difference(dual, rng):
    """BPTT gradient of sum(coeff * tape.y) against central differences."""
    m = DualStreamModel(3, 5, 2, dual_stream=dual, seed=6)
    n = 6
    noise = gumbel_noise(rng.random((n, 3, 4)))
    coeff = rng.normal(size=(n, 3, 4))

    def loss():
        _, tape = m.sample_gumbel_st(n, 0.8, rng, noise=noise)
        return float((coeff * tape.y).sum())

    _, tape = m.sample_gumbel_st(n, 0.8, rng, noise=noise)
    grads = m.backward(tape, coeff)
    flat = m.flatten_grads(grads)
    base = m.get_flat()
    eps = 1e-6
    idx = rng.choice(base.size, 25, replace=False)
    for i in idx:
        pert = base.copy()
        pert[i] += eps
        m.set_flat(pert)
        up = loss()
        pert[i] -= 2 * eps
        m.set_flat(pert)
        down = loss()
        m.set_flat(base)
        fd = (up - down) / (2 * eps)
        npt.assert_allclose(flat[i], fd, rtol=5e-4, atol=1e-7)


def test_parity_stream_feels_offset():
    m = DualStreamModel(4, 6, 1, dual_stream=True, seed=8)
    out = np.zeros((3, 4), dtype=int)
    a = m.conditional_logits(out, parity_offset=0)
    b = m.conditional_logits(out, parity_offset=1)
    assert np.abs(a - b).max() > 1e-6


def test_single_stream_ignores_offset():
    m = DualStreamModel(4, 6, 1, dual_stream=False, seed=8)
    out = np.zeros((3, 4), dtype=int)
    a = m.conditional_logits(out, parity_offset=0)
    b = m.conditional_logits(out, parity_offset=1)
    npt.assert_allclose(a, b, atol=0)


def test_flat_round_trip(rng):
    m = DualStreamModel(3, 4, 1, seed=0)
    v = rng.normal(size=m.n_params)
    m.set_flat(v)
    npt.assert_allclose(m.get_flat(), v, atol=0)
    with pytest.raises(ValueError):
        m.set_flat(v[:-1])


def test_checkpoint_round_trip(tmp_path, rng):
    m = DualStreamModel(4, 6, 2, dual_stream=True, seed=11)
    m.set_flat(rng.normal(size=m.n_params))
    path = tmp_path / "ckpt.npz"
    m.save(path, extra={"step": 17})
    back, meta = DualStreamModel.load(path)
    assert meta["extra"]["step"] == 17
    assert back.metadata() == m.metadata()
    npt.assert_allclose(back.get_flat(), m.get_flat(), atol=0)
    out = np.zeros((2, 4), dtype=int)
    npt.assert_allclose(back.conditional_logits(out), m.conditional_logits(out),
                        atol=0)
