"""Command-line interface.

Subcommands: simulate, train, evaluate, replicate-study, and
config print-defaults. All take a JSON run configuration (except
evaluate, which reads the trainer settings out of the checkpoint).
Unknown configuration keys are rejected. The MENKF_SEED environment
variable, when set, overrides the configured seed.

Exit codes: 0 success; 1 usage, configuration, or input-format
errors; 2 runtime failures (numerical errors, I/O).

Every output file is deterministic given the configuration: rerunning
a command reproduces it byte for byte, with or without parallelism.
Wall-clock timings go to stderr only, for that reason.
"""

import argparse
import concurrent.futures
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arms import ArmSpec
from .exceptions import ConfigError, DataFormatError, MenkfError
from .numerics import RngStream
from .simgen import SCENARIOS, Replicate, SimConfig, gen_base_probs, gen_replicates, split
from .storage import (LoadedDataset, load_checkpoint, read_dataset_csv,
                      read_json, save_checkpoint, write_dataset_csv,
                      write_json, write_manifest, write_rows_csv)
from .trainer import MenkfConfig, fit, make_batches, sigmoid
from .uq import adequacy, predict

# rng children of the root stream, one per pipeline stage
_RNG_BASE = 0
_RNG_REPLICATES = 1
_RNG_TRAIN = 2
_RNG_SPLIT = 3
_RNG_STUDY_TRAIN = 4

_SIM_KEYS = ("m", "replicates", "perturb_sd", "threshold", "p", "q",
             "scenario", "surrogate_sd")


@dataclass(frozen=True)
class TrainerSettings:
    """Trainer section of the run config; arm input widths come from data."""

    ensemble_size: int = 216
    init_var: float = 16.0
    hidden_dims_f: tuple = (16,)
    hidden_dims_g: tuple = (16,)
    activation: str = "tanh"
    batch_size: int = 16
    passes_over_data: int = 1
    jitter_var: float = 0.0
    variance_init: str = "gaussian"
    shuffle_batches: bool = False

    def make_config(self, p: int, q: int, seed: int) -> MenkfConfig:
        return MenkfConfig(
            arm_f=ArmSpec(p, self.hidden_dims_f, self.activation),
            arm_g=ArmSpec(q, self.hidden_dims_g, self.activation),
            ensemble_size=self.ensemble_size,
            init_var=self.init_var,
            batch_size=self.batch_size,
            passes_over_data=self.passes_over_data,
            jitter_var=self.jitter_var,
            variance_init=self.variance_init,
            seed=seed,
            shuffle_batches=self.shuffle_batches,
        )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "menkf-out"
    parallel: bool = False
    sim: SimConfig = SimConfig()
    trainer: TrainerSettings = TrainerSettings()
    train_n: int = 66
    test_n: int = 8


# Trainer settings for the benchmark replicate studies. Arms are affine:
# with a symmetric zero-mean ensemble, hidden-layer weights carry no
# covariance with the prediction, so their Kalman updates would be pure
# sampling noise. Affine arms make every coordinate identified. The small
# weight jitter keeps ensemble spread honest across repeated passes.
_STUDY_TRAINER = dict(hidden_dims_f=(), hidden_dims_g=(), activation="identity",
                      variance_init="gamma_shape_scale", batch_size=11,
                      passes_over_data=3, jitter_var=0.01)


def study_preset(scenario: str) -> RunConfig:
    """Frozen run configuration for one scenario's replicate study.

    The stacked scenario uses a larger, tighter-prior ensemble and more
    passes so the arm weight settles by fit quality rather than by
    initialization luck.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; expected one of {list(SCENARIOS)}")
    trainer = dict(_STUDY_TRAINER)
    if scenario == "stacked_average":
        trainer.update(ensemble_size=433, init_var=2.0, passes_over_data=5)
    return RunConfig(sim=SimConfig(scenario=scenario),
                     trainer=TrainerSettings(**trainer))


def default_run_config_dict() -> dict:
    cfg = RunConfig()
    return {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "parallel": cfg.parallel,
        "sim": {key: getattr(cfg.sim, key) for key in _SIM_KEYS},
        "trainer": {
            "ensemble_size": cfg.trainer.ensemble_size,
            "init_var": cfg.trainer.init_var,
            "hidden_dims_f": list(cfg.trainer.hidden_dims_f),
            "hidden_dims_g": list(cfg.trainer.hidden_dims_g),
            "activation": cfg.trainer.activation,
            "batch_size": cfg.trainer.batch_size,
            "passes_over_data": cfg.trainer.passes_over_data,
            "jitter_var": cfg.trainer.jitter_var,
            "variance_init": cfg.trainer.variance_init,
            "shuffle_batches": cfg.trainer.shuffle_batches,
        },
        "split": {"train_n": cfg.train_n, "test_n": cfg.test_n},
    }


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def run_config_from_dict(doc: dict) -> RunConfig:
    _check_keys(doc, {"seed", "output_dir", "parallel", "sim", "trainer", "split"},
                "run config")
    sim_doc = doc.get("sim", {})
    _check_keys(sim_doc, _SIM_KEYS, "sim")
    trainer_doc = dict(doc.get("trainer", {}))
    _check_keys(trainer_doc, {"ensemble_size", "init_var", "hidden_dims_f",
                              "hidden_dims_g", "activation", "batch_size",
                              "passes_over_data", "jitter_var", "variance_init",
                              "shuffle_batches"}, "trainer")
    split_doc = doc.get("split", {})
    _check_keys(split_doc, {"train_n", "test_n"}, "split")
    for key in ("hidden_dims_f", "hidden_dims_g"):
        if key in trainer_doc:
            trainer_doc[key] = tuple(trainer_doc[key])
    try:
        return RunConfig(
            seed=int(doc.get("seed", 0)),
            output_dir=str(doc.get("output_dir", "menkf-out")),
            parallel=bool(doc.get("parallel", False)),
            sim=SimConfig(**sim_doc),
            trainer=TrainerSettings(**trainer_doc),
            train_n=int(split_doc.get("train_n", 66)),
            test_n=int(split_doc.get("test_n", 8)),
        )
    except (MenkfError, TypeError, ValueError) as err:
        raise ConfigError(f"run config: {err}") from err


def load_run_config(path) -> RunConfig:
    cfg = run_config_from_dict(read_json(path))
    env_seed = os.environ.get("MENKF_SEED")
    if env_seed is not None:
        try:
            cfg = RunConfig(**{**vars_of(cfg), "seed": int(env_seed)})
        except ValueError:
            raise ConfigError(f"MENKF_SEED={env_seed!r} is not an integer") from None
    return cfg


def vars_of(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "output_dir": cfg.output_dir, "parallel": cfg.parallel,
            "sim": cfg.sim, "trainer": cfg.trainer,
            "train_n": cfg.train_n, "test_n": cfg.test_n}


def _echo_config(cfg: RunConfig) -> dict:
    doc = default_run_config_dict()
    doc["seed"] = cfg.seed
    doc["output_dir"] = cfg.output_dir
    doc["parallel"] = cfg.parallel
    doc["sim"] = {key: getattr(cfg.sim, key) for key in _SIM_KEYS}
    doc["trainer"].update({
        "ensemble_size": cfg.trainer.ensemble_size,
        "init_var": cfg.trainer.init_var,
        "hidden_dims_f": list(cfg.trainer.hidden_dims_f),
        "hidden_dims_g": list(cfg.trainer.hidden_dims_g),
        "activation": cfg.trainer.activation,
        "batch_size": cfg.trainer.batch_size,
        "passes_over_data": cfg.trainer.passes_over_data,
        "jitter_var": cfg.trainer.jitter_var,
        "variance_init": cfg.trainer.variance_init,
        "shuffle_batches": cfg.trainer.shuffle_batches,
    })
    doc["split"] = {"train_n": cfg.train_n, "test_n": cfg.test_n}
    return doc


# ----------------------------------------------------------------- commands

def _replicate_name(j: int) -> str:
    return f"rep_{j:03d}.csv"


def cmd_simulate(cfg: RunConfig, output_dir: str | None = None) -> int:
    out = Path(output_dir or cfg.output_dir)
    (out / "replicates").mkdir(parents=True, exist_ok=True)
    root = RngStream(cfg.seed)
    base = gen_base_probs(cfg.sim, root.child(_RNG_BASE))
    reps = gen_replicates(cfg.sim, base, root.child(_RNG_REPLICATES))
    files = {}
    for j, rep in enumerate(reps):
        rel = f"replicates/{_replicate_name(j)}"
        write_dataset_csv(out / rel, rep)
        files[rel] = out / rel
    write_manifest(out / "manifest.json", cfg.seed, cfg.sim.scenario, files)
    print(f"wrote {len(reps)} replicate datasets under {out}")
    return 0


def cmd_train(cfg: RunConfig, dataset_path: str, output_dir: str | None = None) -> int:
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = read_dataset_csv(dataset_path)
    mcfg = cfg.trainer.make_config(data.v_f.shape[1], data.v_g.shape[1], cfg.seed)
    batches = make_batches(data.v_f, data.v_g, data.target_logits, mcfg.batch_size)
    started = time.perf_counter()
    ensemble, trace = fit(batches, mcfg, RngStream(cfg.seed).child(_RNG_TRAIN))
    elapsed = time.perf_counter() - started
    save_checkpoint(out / "checkpoint.menkf", ensemble, mcfg)
    write_rows_csv(out / "trace.csv", trace.rows(),
                   ["step", "pass_index", "batch_index", "weight_g",
                    "noise_var", "innovation_norm"])
    last = trace.records[-1]
    print(f"trained on {data.size} rows ({len(batches)} batches); "
          f"final arm weights f={1.0 - last.weight_g:.4f} g={last.weight_g:.4f}, "
          f"noise var {last.noise_var:.4f}")
    print(f"[menkf] train took {elapsed:.2f}s", file=sys.stderr)
    return 0


def _evaluate_ensemble(ensemble, mcfg: MenkfConfig, data) -> tuple[dict, list]:
    layout = mcfg.layout()
    summaries = predict(ensemble, data.v_f, data.v_g, layout, mcfg.arm_f, mcfg.arm_g)
    truth = data.true_prob if data.true_prob is not None else sigmoid(data.target_logits)
    report = adequacy(summaries, truth, ensemble, layout)
    rows = [{"row": j, "point": s.point, "lo": s.lo, "hi": s.hi,
             "width": s.width, "true_prob": float(t)}
            for j, (s, t) in enumerate(zip(summaries, truth))]
    return report.to_dict(), rows


def cmd_evaluate(checkpoint_path: str, dataset_path: str, output_dir: str) -> int:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ensemble, mcfg = load_checkpoint(checkpoint_path)
    data = read_dataset_csv(dataset_path)
    started = time.perf_counter()
    report, rows = _evaluate_ensemble(ensemble, mcfg, data)
    elapsed = time.perf_counter() - started
    write_json(out / "report.json", report)
    write_rows_csv(out / "intervals.csv", rows,
                   ["row", "point", "lo", "hi", "width", "true_prob"])
    print(f"coverage {report['coverage']:.4f}, avg width {report['avg_width']:.4f}, "
          f"mae {report['mae']:.4f}, arm f weight {report['arm_f_weight']:.4f} "
          f"on {report['n_test']} rows")
    print(f"[menkf] evaluate took {elapsed:.2f}s", file=sys.stderr)
    return 0


def run_study_replicate(j: int, rep: Replicate, cfg: RunConfig) -> dict:
    """Split, train, and evaluate replicate j; deterministic in (j, cfg)."""
    root = RngStream(cfg.seed)
    train_part, test_part = split(rep, cfg.train_n, cfg.test_n,
                                  root.child(_RNG_SPLIT).child(j))
    mcfg = cfg.trainer.make_config(rep.v_f.shape[1], rep.v_g.shape[1], cfg.seed)
    batches = make_batches(train_part.v_f, train_part.v_g,
                           train_part.target_logits, mcfg.batch_size)
    ensemble, _ = fit(batches, mcfg, root.child(_RNG_STUDY_TRAIN).child(j))
    data_like = LoadedDataset(v_f=test_part.v_f, v_g=test_part.v_g,
                              target_logits=test_part.target_logits,
                              true_prob=test_part.true_prob,
                              labels=test_part.labels)
    report, _ = _evaluate_ensemble(ensemble, mcfg, data_like)
    report["replicate"] = j
    return report


def _study_worker(args) -> tuple[int, dict | None, str | None]:
    j, rep, cfg = args
    try:
        return j, run_study_replicate(j, rep, cfg), None
    except MenkfError as err:
        return j, None, f"{type(err).__name__}: {err}"


def cmd_replicate_study(cfg: RunConfig, output_dir: str | None = None,
                        parallel: bool | None = None) -> int:
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    use_parallel = cfg.parallel if parallel is None else parallel
    root = RngStream(cfg.seed)
    started = time.perf_counter()
    base = gen_base_probs(cfg.sim, root.child(_RNG_BASE))
    reps = gen_replicates(cfg.sim, base, root.child(_RNG_REPLICATES))
    jobs = [(j, rep, cfg) for j, rep in enumerate(reps)]
    if use_parallel and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(os.cpu_count() or 1, len(jobs))) as pool:
            results = list(pool.map(_study_worker, jobs))
    else:
        results = [_study_worker(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    rows = [row for _, row, err in results if err is None]
    failures = {str(j): err for j, _, err in results if err is not None}
    aggregates = _aggregate_study(rows)
    study = {
        "config": _echo_config(cfg),
        "aggregates": aggregates,
        "failures": failures,
        "n_replicates": len(reps),
    }
    write_json(out / "study.json", study)
    write_rows_csv(out / "study.csv", rows,
                   ["replicate", "coverage", "avg_width", "mae",
                    "mean_arm_weight", "arm_f_weight", "n_test"])
    elapsed = time.perf_counter() - started
    print(f"study over {len(reps)} replicates: "
          f"coverage {aggregates['coverage_pooled']:.4f} (pooled), "
          f"avg width {aggregates['width_mean']:.4f}, "
          f"arm f weight {aggregates['arm_f_weight_mean']:.4f}")
    print(f"[menkf] replicate-study took {elapsed:.2f}s", file=sys.stderr)
    if failures:
        print(f"{len(failures)} replicate(s) failed: "
              f"{sorted(failures)}", file=sys.stderr)
        return 2
    return 0


def _aggregate_study(rows: list[dict]) -> dict:
    if not rows:
        return {"coverage_pooled": float("nan"), "coverage_mean": float("nan"),
                "width_mean": float("nan"), "width_sd": float("nan"),
                "mae_mean": float("nan"), "mean_arm_weight_mean": float("nan"),
                "arm_f_weight_mean": float("nan"), "n_rows": 0}
    coverages = np.array([r["coverage"] for r in rows])
    widths = np.array([r["avg_width"] for r in rows])
    n_tests = np.array([r["n_test"] for r in rows])
    weights = np.array([r["mean_arm_weight"] for r in rows])
    pooled = float((coverages * n_tests).sum() / n_tests.sum())
    return {
        "coverage_pooled": pooled,
        "coverage_mean": float(coverages.mean()),
        "width_mean": float(widths.mean()),
        "width_sd": float(widths.std(ddof=1)) if len(rows) > 1 else 0.0,
        "mae_mean": float(np.mean([r["mae"] for r in rows])),
        "mean_arm_weight_mean": float(weights.mean()),
        "arm_f_weight_mean": float(1.0 - weights.mean()),
        "n_rows": len(rows),
    }


# --------------------------------------------------------------- entrypoint

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="menkf",
                     description="Ensemble Kalman trainer for two-arm surrogates")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate replicate datasets")
    sim.add_argument("--config", required=True)
    sim.add_argument("--output-dir", default=None)

    train = sub.add_parser("train", help="fit the ensemble on one dataset CSV")
    train.add_argument("--config", required=True)
    train.add_argument("--dataset", required=True)
    train.add_argument("--output-dir", default=None)

    ev = sub.add_parser("evaluate", help="prediction intervals from a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--output-dir", default=".")

    study = sub.add_parser("replicate-study",
                           help="simulate, train, and evaluate all replicates")
    study.add_argument("--config", required=True)
    study.add_argument("--output-dir", default=None)
    study.add_argument("--parallel", action="store_true", default=None)

    cfg = sub.add_parser("config", help="configuration helpers")
    cfg_sub = cfg.add_subparsers(dest="config_command", required=True)
    pd = cfg_sub.add_parser("print-defaults", help="print the default run config")
    pd.add_argument("--study", default=None, metavar="SCENARIO",
                    help="print the frozen study config for a scenario instead")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"menkf: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return int(err.code or 0)
    try:
        if args.command == "config":
            doc = (default_run_config_dict() if args.study is None
                   else _echo_config(study_preset(args.study)))
            print(json.dumps(doc, indent=2, sort_keys=True))
            return 0
        if args.command == "simulate":
            return cmd_simulate(load_run_config(args.config), args.output_dir)
        if args.command == "train":
            return cmd_train(load_run_config(args.config), args.dataset,
                             args.output_dir)
        if args.command == "evaluate":
            return cmd_evaluate(args.checkpoint, args.dataset, args.output_dir)
        if args.command == "replicate-study":
            return cmd_replicate_study(load_run_config(args.config),
                                       args.output_dir, args.parallel)
        raise _UsageError(f"unknown command {args.command!r}")
    except (ConfigError, DataFormatError, _UsageError) as err:
        print(f"menkf: {err}", file=sys.stderr)
        return 1
    except MenkfError as err:
        print(f"menkf: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"menkf: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
