"""Command-line entry points.

Subcommands:

* ``train``     run the constrained variational optimization
* ``evaluate``  sample a trained checkpoint and emit observable tables
* ``oracle``    exact-diagonalization reference tables for small rings
* ``compare``   deviation report between two result directories

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-finite loss during training), 4 comparison threshold exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, constraints, estimators, oracle
from .config import ConfigError, ExperimentConfig, load_config
from .model import DualStreamModel
from .pauli import gram_expansion
from .trainer import Trainer, TrainingDiverged, spawn_rngs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="povmgs",
        description="variational POVM-distribution ground-state search",
    )
    parser.add_argument("--version", action="version", version=f"povmgs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run constrained training")
    p_train.add_argument("--config", required=True, help="YAML experiment config")
    p_train.add_argument("--out", help="output directory (default: runs/<model>_L<size>)")
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.add_argument("--checkpoint", help="resume from a saved checkpoint")
    p_train.add_argument("--batch", type=int, help="override the evaluation batch size")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", help="config YAML (default: the checkpoint's echo)")
    p_eval.add_argument("--out", help="output directory (default: <run>/eval)")
    p_eval.add_argument("--seed", type=int, help="override the sampling seed")
    p_eval.add_argument("--batch", type=int, help="number of evaluation samples")
    p_eval.set_defaults(func=cmd_evaluate)

    p_oracle = sub.add_parser("oracle", help="exact reference tables")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--out", help="output directory (default: oracle/<model>_L<size>)")
    p_oracle.add_argument("--samples", type=int, default=100_000,
                          help="exact-state samples for spectrum calibration")
    p_oracle.add_argument("--seed", type=int, help="override the config seed")
    p_oracle.set_defaults(func=cmd_oracle)

    p_cmp = sub.add_parser("compare", help="compare two result directories")
    p_cmp.add_argument("--run", required=True, help="run (or oracle) directory")
    p_cmp.add_argument("--reference", required=True, help="reference directory")
    p_cmp.add_argument("--out", help="also write the report JSON here")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def cmd_train(args, argv) -> int:
    overrides = {"seed": args.seed, "eval_batch": args.batch}
    cfg = load_config(args.config, overrides)
    out = Path(args.out) if args.out else Path("runs") / f"{cfg.model}_L{cfg.size}"
    trainer = Trainer(cfg, out_dir=out)
    if args.checkpoint:
        trainer.load_checkpoint(Path(args.checkpoint))
        print(f"resumed from {args.checkpoint} at step {trainer.step_count}")
    summary = trainer.run(log=lambda msg: print(msg, flush=True), argv=argv)
    print(json.dumps(summary["final_energy"], sort_keys=True))
    print(f"artifacts in {out}")
    return 0


def _config_from_checkpoint(meta: dict) -> ExperimentConfig:
    echo = meta.get("extra", {}).get("config")
    if not echo:
        raise ConfigError("checkpoint carries no config echo; pass --config")
    return ExperimentConfig(**echo)


def cmd_evaluate(args, argv) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise ConfigError(f"checkpoint {ckpt} does not exist")
    model, meta = DualStreamModel.load(ckpt)
    if args.config:
        cfg = load_config(args.config, {"seed": args.seed})
    else:
        cfg = _config_from_checkpoint(meta)
        if args.seed is not None:
            echo = cfg.to_dict()
            echo["seed"] = args.seed
            cfg = ExperimentConfig(**echo)
    arch = {"size": cfg.size, "hidden": cfg.hidden_dim, "layers": cfg.n_layers,
            "dual_stream": cfg.dual_stream}
    if meta["model"] != arch:
        raise ConfigError(
            f"checkpoint architecture {meta['model']} does not match config {arch}")
    ham = cfg.hamiltonian()
    rng = spawn_rngs(cfg.seed)["eval"]
    n = args.batch or cfg.eval_batch_or_default
    outcomes, _ = model.sample_inference(n, rng)
    ref = None
    if cfg.oracle_compare == "on" or (cfg.oracle_compare == "auto" and cfg.size <= 10):
        ref = oracle.ground_state(ham).energy_density
    report = estimators.estimate_energy(outcomes, ham, ref, with_variance=True)
    tables = [estimators.estimate_correlators(outcomes, ax) for ax in (1, 2, 3)]
    out = Path(args.out) if args.out else ckpt.parent.parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "energy.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "correlators.csv", "w") as fh:
        fh.write(estimators.correlators_to_csv(tables))
    print(json.dumps(report.to_dict(), sort_keys=True))
    print(f"evaluation written to {out}")
    return 0


def cmd_oracle(args, argv) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    state = oracle.ground_state(cfg.hamiltonian())
    out = Path(args.out) if args.out else Path("oracle") / f"{cfg.model}_L{cfg.size}"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w") as fh:
        json.dump({"package_version": __version__, "invocation": argv,
                   "config": cfg.to_dict(), "kind": "oracle"},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    energy = {
        "energy": state.energy,
        "energy_density": state.energy_density,
        "density_vs_reference": 0.0,
        "variance_per_site": oracle.exact_energy_variance(state) / cfg.size,
        "variance_caveat": False,
        "gap": state.gap,
        "degenerate": state.degenerate,
        "n_samples": 0,
    }
    with open(out / "energy.json", "w") as fh:
        json.dump(energy, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tables = [
        estimators.CorrelatorTable(ax, oracle.exact_correlators(state, ax),
                                   np.zeros(cfg.size))
        for ax in (1, 2, 3)
    ]
    with open(out / "correlators.csv", "w") as fh:
        fh.write(estimators.correlators_to_csv(tables))
    if cfg.size <= 8:
        _write_calibration(out / "calibration.csv", state, cfg, args.samples)
        print(f"oracle tables and calibration written to {out}")
    else:
        print(f"oracle tables written to {out} (ring too large for calibration sampling)")
    return 0


def _write_calibration(path: Path, state: oracle.ExactState,
                       cfg: ExperimentConfig, n_samples: int) -> None:
    """Sampled-Gram eigenvalue calibration against the exact ground state.

    Draws outcome strings from the exact state, splits them into a
    training and a validation half, and writes one row per momentum
    sector and mode: the validated eigenvalue, the train/validation
    spread, and their ratio lam_val / P65(spread).  Exactly-satisfied
    constraints produce a noise band of width ~1 in the ratio; a model
    with genuinely small positive eigenvalues pushes a positive tail out
    to several units.
    """
    exp = gram_expansion(cfg.pool_weight, cfg.pool_range, cfg.size)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    samples = oracle.sample_exact(state, n_samples, rng)
    half_a, half_b = constraints.split_halves(samples, rng)
    m_train = constraints.build_gram_hard(exp, half_a, tag="train")
    m_val = constraints.build_gram_hard(exp, half_b, tag="val")
    spectral = constraints.validate_spectrum(m_train, m_val, 1.0, 1.0)
    with open(path, "w") as fh:
        fh.write("momentum,mode,lam_train,lam_val,spread_p65,ratio\n")
        for ki, m in enumerate(spectral.momenta):
            denom = spectral.tau_k[ki]
            for a in range(spectral.lam_val.shape[1]):
                lam_t = spectral.lam_train[ki, a]
                lam_v = spectral.lam_val[ki, a]
                fh.write(f"{m},{a},{lam_t!r},{lam_v!r},{denom!r},{lam_v / denom!r}\n")


def _read_result_dir(path: Path):
    base = path / "eval" if (path / "eval" / "energy.json").exists() else path
    energy_file = base / "energy.json"
    corr_file = base / "correlators.csv"
    if not energy_file.exists() or not corr_file.exists():
        raise ConfigError(f"{path} does not look like a result directory "
                          f"(missing energy.json/correlators.csv)")
    with open(energy_file) as fh:
        energy = json.load(fh)
    with open(corr_file) as fh:
        corr = estimators.correlators_from_csv(fh.read())
    return energy, corr


def cmd_compare(args, argv) -> int:
    run_dir = Path(args.run)
    ref_dir = Path(args.reference)
    energy_a, corr_a = _read_result_dir(run_dir)
    energy_b, corr_b = _read_result_dir(ref_dir)
    thresholds = {
        "energy_density": ExperimentConfig().threshold_energy_density,
        "correlator": ExperimentConfig().threshold_correlator,
    }
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path) as fh:
            cfg = json.load(fh).get("config", {})
        thresholds["energy_density"] = cfg.get(
            "threshold_energy_density", thresholds["energy_density"])
        thresholds["correlator"] = cfg.get(
            "threshold_correlator", thresholds["correlator"])
    de = abs(energy_a["energy_density"] - energy_b["energy_density"])
    channels = {}
    worst = 0.0
    for ch in sorted(set(corr_a) & set(corr_b)):
        va, _ = corr_a[ch]
        vb, _ = corr_b[ch]
        n = min(len(va), len(vb))
        dev = float(np.max(np.abs(va[:n] - vb[:n])))
        channels[ch] = dev
        worst = max(worst, dev)
    report = {
        "energy_density_deviation": de,
        "max_correlator_deviation": worst,
        "correlator_deviation_by_channel": channels,
        "thresholds": thresholds,
        "passed": bool(de <= thresholds["energy_density"]
                       and worst <= thresholds["correlator"]),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if report["passed"] else 4


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, ["povmgs", *argv])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
