import numpy as np
import pytest

from povmgs.config import ConfigError, ExperimentConfig, load_config


def write(tmp_path, text, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_valid():
    cfg = ExperimentConfig()
    assert cfg.model == "gapped_tfim"
    assert cfg.buffer_batch == 8192
    assert cfg.learning_rate == 1e-3
    assert cfg.hamiltonian().name == "gapped_tfim"


def test_preset_hamiltonians_have_reference_coefficients():
    # bond/field magnitudes 0.3/0.3, 0.3/0.6 and uniform 0.3
    for model, bond, field in [("tfim", 0.3, 0.3), ("gapped_tfim", 0.3, 0.6)]:
        spec = ExperimentConfig(model=model, size=4).hamiltonian()
        coeffs = {}
        for c, t in spec.terms:
            coeffs.setdefault(t.weight, set()).add(round(c, 12))
        assert coeffs[2] == {bond}
        assert coeffs[1] == {field}
    spec = ExperimentConfig(model="heisenberg", size=4).hamiltonian()
    assert {round(c, 12) for c, _ in spec.terms} == {0.3}
    assert all(t.weight == 2 for _, t in spec.terms)


def test_custom_model_terms():
    cfg = ExperimentConfig(model="custom", size=3,
                           custom_terms=[[0.5, "Z0"], [-0.2, "X0 X1"]])
    spec = cfg.hamiltonian()
    assert {(c, str(t)) for c, t in spec.terms} == {(0.5, "Z0"), (-0.2, "X0 X1")}


def test_validation_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(model="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(model="custom")
    with pytest.raises(ConfigError):
        ExperimentConfig(custom_terms=[[1.0, "Z0"]])  # preset + custom_terms
    with pytest.raises(ConfigError):
        ExperimentConfig(size=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(pool_weight=3)
    with pytest.raises(ConfigError):
        ExperimentConfig(pool_range=9, size=8)
    with pytest.raises(ConfigError):
        ExperimentConfig(tau=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(buffer_batch=101)  # odd: cannot split halves
    with pytest.raises(ConfigError):
        ExperimentConfig(anneal_fraction=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(temperature_floor=2.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(lambda_tgt_min=1.5, lambda_tgt_max=1.4)
    with pytest.raises(ConfigError):
        ExperimentConfig(oracle_compare="maybe")
    with pytest.raises(ConfigError):
        ExperimentConfig(model="custom", size=2,
                         custom_terms=[["Z0", 1.0]]).hamiltonian()


def test_load_config_round_trip(tmp_path):
    path = write(tmp_path, """
model: heisenberg
size: 6
tau: 4.0
buffer_batch: 256
steps: 50
seed: 9
""")
    cfg = load_config(path)
    assert cfg.model == "heisenberg"
    assert cfg.size == 6
    assert cfg.tau == 4.0
    assert cfg.seed == 9
    # untouched fields keep defaults
    assert cfg.s == 1.0


def test_load_config_unknown_key_reports_line(tmp_path):
    path = write(tmp_path, "model: tfim\nbanana: 3\n")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "line 2" in str(exc.value)
    assert "banana" in str(exc.value)


def test_load_config_type_errors(tmp_path):
    with pytest.raises(ConfigError, match="must be an integer"):
        load_config(write(tmp_path, "size: 4.5\n"))
    with pytest.raises(ConfigError, match="must be a number"):
        load_config(write(tmp_path, "tau: fast\n", "b.yaml"))
    with pytest.raises(ConfigError, match="must be true or false"):
        load_config(write(tmp_path, "dual_stream: 1\n", "c.yaml"))
    # int -> float promotion is fine
    cfg = load_config(write(tmp_path, "tau: 4\n", "d.yaml"))
    assert cfg.tau == 4.0 and isinstance(cfg.tau, float)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


def test_load_config_overrides(tmp_path):
    path = write(tmp_path, "model: tfim\nseed: 1\n")
    cfg = load_config(path, overrides={"seed": 7, "out_dir": None})
    assert cfg.seed == 7  # explicit override wins
    cfg2 = load_config(path, overrides={"seed": None})
    assert cfg2.seed == 1  # None overrides are ignored


def test_load_config_empty_file(tmp_path):
    cfg = load_config(write(tmp_path, "\n"))
    assert cfg.model == "gapped_tfim"


def test_load_config_non_mapping(tmp_path):
    with pytest.raises(ConfigError, match="mapping"):
        load_config(write(tmp_path, "- 1\n- 2\n"))
