"""Experiment runner CLI: `run`, `validate`, and `macs` subcommands over
a strict JSON config.

BLAS thread pools are pinned to one thread at module import (before numpy
loads) so that repeated runs of the same config produce byte-identical
outputs regardless of the machine's threading defaults. Import this
module first in entry points; library users are unaffected if numpy is
already loaded.
"""

from __future__ import annotations

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ[_var] = "1"

import argparse
import dataclasses
import json
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    SolverConfig,
    amp,
    build_mmv_problem,
    colocate,
    default_lambda,
    fista,
    ista,
)
from .channel import apply_feature_scaler, build_dataset, fit_feature_scaler, received_from_features
from .evaluation import MacCount, RocCurve, ScoredTrials, mac_count_amp, mac_count_slp, roc_curve
from .federation import (
    FederationConfig,
    LocalUpdate,
    fuse_cluster_scores,
    run_training,
    serialize_update,
)
from .rng import substream
from .scenario import ScenarioArtifacts, ScenarioConfig, build_scenario
from .slp import forward

ALL_DETECTORS = ("fl", "ista", "fista", "amp")
ALL_EMIT = ("roc_csv", "summary_json", "history_csv", "checkpoints")
ARCHITECTURES = ("cellfree", "colocated")
ROC_MAX_POINTS = 2048

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    detectors: tuple[str, ...] = ALL_DETECTORS
    architecture: str = "cellfree"
    eval_trials: int = 1000
    output_dir: str = "results"
    emit: tuple[str, ...] = ("roc_csv", "summary_json")
    lambda_scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.detectors:
            raise ConfigError("detectors: must not be empty")
        for d in self.detectors:
            if d not in ALL_DETECTORS:
                raise ConfigError(f"detectors: unknown detector {d!r}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture: must be one of {ARCHITECTURES}")
        if self.eval_trials < 1:
            raise ConfigError(f"eval_trials: must be >= 1, got {self.eval_trials}")
        for e in self.emit:
            if e not in ALL_EMIT:
                raise ConfigError(f"emit: unknown output kind {e!r}")
        if self.lambda_scale < 0:
            raise ConfigError(f"lambda_scale: must be >= 0, got {self.lambda_scale}")


@dataclass
class DetectorResult:
    roc: RocCurve
    macs_complex1: MacCount
    macs_real4: MacCount
    iters: int
    runtime_s: float
    trials: ScoredTrials


@dataclass
class ResultBundle:
    results: dict[str, DetectorResult]
    config_echo: dict
    seed: int
    version: str
    checkpoint: bytes | None = None
    history: list[float] | None = None


def _build_section(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    rename = {"lambda": "lam"} if cls is SolverConfig else {}
    kwargs = {}
    for key, value in data.items():
        attr = rename.get(key, key)
        if attr not in known:
            raise ConfigError(f"{section}: unknown key {key!r}")
        kwargs[attr] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    """Strict parse: unknown keys are rejected, missing keys take the
    documented full-scale defaults."""
    if not isinstance(data, dict):
        raise ConfigError("top level: must be a JSON object")
    top_known = {
        "scenario", "federation", "solver", "detectors", "architecture",
        "eval_trials", "output_dir", "emit", "lambda_scale",
    }
    for key in data:
        if key not in top_known:
            raise ConfigError(f"top level: unknown key {key!r}")
    scenario = _build_section(ScenarioConfig, data.get("scenario", {}), "scenario")
    federation = _build_section(FederationConfig, data.get("federation", {}), "federation")
    solver_data = dict(data.get("solver", {}))
    if solver_data.get("lambda", None) is None:
        solver_data.pop("lambda", None)
    solver = _build_section(SolverConfig, solver_data, "solver")
    try:
        return ExperimentConfig(
            scenario=scenario,
            federation=federation,
            solver=solver,
            detectors=tuple(data.get("detectors", ALL_DETECTORS)),
            architecture=data.get("architecture", "cellfree"),
            eval_trials=data.get("eval_trials", 1000),
            output_dir=data.get("output_dir", "results"),
            emit=tuple(data.get("emit", ("roc_csv", "summary_json"))),
            lambda_scale=data.get("lambda_scale", 1.0),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Inverse of config_from_dict; round-trips through JSON."""
    solver = dataclasses.asdict(config.solver)
    solver["lambda"] = solver.pop("lam")
    return {
        "scenario": dataclasses.asdict(config.scenario),
        "federation": dataclasses.asdict(config.federation),
        "solver": solver,
        "detectors": list(config.detectors),
        "architecture": config.architecture,
        "eval_trials": config.eval_trials,
        "output_dir": config.output_dir,
        "emit": list(config.emit),
        "lambda_scale": config.lambda_scale,
    }


def _version_string() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"fedad-{__version__}+{described.stdout.strip()}"
    except OSError:
        pass
    return f"fedad-{__version__}"


def _resolve_solver(config: ExperimentConfig, scenario: ScenarioConfig) -> SolverConfig:
    solver = config.solver
    if solver.lam is None:
        n_total = scenario.num_aps * scenario.antennas_per_ap
        lam = default_lambda(scenario, n_total, config.lambda_scale)
        solver = dataclasses.replace(solver, lam=lam)
    return solver


def _fl_detect(
    config: ExperimentConfig, artifacts: ScenarioArtifacts, events, seed: int
) -> tuple[ScoredTrials, list[float], bytes]:
    """Train the federated detector, then score every evaluation event by
    clustered fusion of per-AP probabilities."""
    params, history = run_training(
        artifacts, config.federation, substream(seed, "federation")
    )
    data = events
    if artifacts.config.standardize_features:
        # Mirror run_training's stream derivation to refit the same scaler
        # the model was trained under, then apply it to the event features.
        train_stream = substream(seed, "federation").spawn(4)[1]
        train_data = build_dataset(
            artifacts.config, artifacts.beta, artifacts.pilots,
            config.federation.train_samples, train_stream,
        )
        scaler = fit_feature_scaler(train_data)
        data = apply_feature_scaler(events, scaler)

    m = artifacts.config.num_aps
    k = artifacts.config.num_devices
    n_events = data.n_samples
    per_ap = np.empty((m, n_events, k))
    for ap in range(m):
        scores, _ = forward(params, data.features[:, ap, :])
        per_ap[ap] = scores
    fused = np.empty((n_events, k))
    for i in range(n_events):
        fused[i] = fuse_cluster_scores(per_ap[:, i, :], artifacts.beta, artifacts.config.cluster_size)
    trials = ScoredTrials(
        scores=fused.ravel(), truths=data.labels.astype(np.int8).ravel(), detector_tag="fl"
    )
    checkpoint = serialize_update(
        LocalUpdate(params=params, weight=1.0, ap_index=0),
        round_index=config.federation.rounds,
    )
    return trials, history.heldout_bce, checkpoint


def _baseline_detect(
    detector: str, config: ExperimentConfig, artifacts: ScenarioArtifacts, events
) -> tuple[ScoredTrials, int]:
    """Per-event centralized MMV solve; the detection statistic is the
    recovered row energy."""
    cfg = artifacts.config
    solver = _resolve_solver(config, cfg)
    n_events = events.n_samples
    stats = np.empty((n_events, cfg.num_devices))
    iters_used = 0
    for i in range(n_events):
        received = np.stack(
            [
                received_from_features(
                    events.features[i, ap], cfg.pilot_len, cfg.antennas_per_ap
                )
                for ap in range(cfg.num_aps)
            ]
        )
        problem = build_mmv_problem(received, artifacts.pilots, cfg.tx_power)
        if detector == "ista":
            est = ista(problem, solver)
        elif detector == "fista":
            est = fista(problem, solver)
        elif detector == "amp":
            est = amp(problem, solver, epsilon_prior=cfg.activation_prob)
        else:
            raise ValueError(f"unknown baseline {detector!r}")
        stats[i] = est.activity_stat
        iters_used = max(iters_used, est.iterations_used)
    trials = ScoredTrials(
        scores=stats.ravel(),
        truths=events.labels.astype(np.int8).ravel(),
        detector_tag=detector,
    )
    return trials, iters_used


def run_experiment(config: ExperimentConfig) -> ResultBundle:
    """Execute the full seeded pipeline for every requested detector."""
    seed = config.scenario.master_seed
    artifacts = build_scenario(config.scenario)
    if config.architecture == "colocated":
        artifacts = colocate(artifacts)
    stage = "scenario generation"
    try:
        stage = "evaluation event generation"
        events = build_dataset(
            artifacts.config, artifacts.beta, artifacts.pilots,
            config.eval_trials, substream(seed, "eval-events"),
        )
        results: dict[str, DetectorResult] = {}
        history = None
        checkpoint = None
        cfg = artifacts.config
        for detector in config.detectors:
            stage = f"detector {detector}"
            t0 = time.perf_counter()
            if detector == "fl":
                trials, history, checkpoint = _fl_detect(config, artifacts, events, seed)
                macs1 = mac_count_slp(cfg)
                macs4 = macs1
                iters = config.federation.rounds
            else:
                trials, iters = _baseline_detect(detector, config, artifacts, events)
                macs1 = mac_count_amp(cfg, iters, complex_mac_real_ops=1)
                macs4 = mac_count_amp(cfg, iters, complex_mac_real_ops=4)
            runtime = time.perf_counter() - t0
            results[detector] = DetectorResult(
                roc=roc_curve(trials, ROC_MAX_POINTS),
                macs_complex1=macs1,
                macs_real4=macs4,
                iters=iters,
                runtime_s=runtime,
                trials=trials,
            )
    except (ValueError, FloatingPointError, RuntimeError) as exc:
        raise RuntimeError(f"stage failed: {stage}: {exc}") from exc
    return ResultBundle(
        results=results,
        config_echo=config_to_dict(config),
        seed=seed,
        version=_version_string(),
        checkpoint=checkpoint,
        history=history,
    )


def _format_sig(x: float) -> str:
    return f"{x:.9g}"


def emit_results(bundle: ResultBundle, config: ExperimentConfig) -> list[Path]:
    """Write the requested output files; returns the paths written."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output dir {out}: {exc}") from exc
    written: list[Path] = []
    arch = config.architecture
    try:
        if "roc_csv" in config.emit:
            for detector, res in bundle.results.items():
                path = out / f"roc_{detector}_{arch}.csv"
                lines = ["detector,architecture,threshold,fpr,tpr"]
                for thr, fpr, tpr in res.roc.points:
                    lines.append(
                        f"{detector},{arch},{_format_sig(thr)},"
                        f"{_format_sig(fpr)},{_format_sig(tpr)}"
                    )
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
        if "summary_json" in config.emit:
            path = out / "summary.json"
            payload = {
                detector: {
                    "auc": res.roc.auc,
                    "macs_complex1": res.macs_complex1.macs,
                    "macs_real4": res.macs_real4.macs,
                    "iters": res.iters,
                    "runtime_s": res.runtime_s,
                }
                for detector, res in bundle.results.items()
            }
            doc = {
                **payload,
                "config_echo": bundle.config_echo,
                "seed": bundle.seed,
                "version": bundle.version,
            }
            path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
            written.append(path)
        if "history_csv" in config.emit and bundle.history is not None:
            path = out / f"history_fl_{arch}.csv"
            lines = ["round,heldout_bce"]
            for rnd, bce in enumerate(bundle.history):
                lines.append(f"{rnd},{_format_sig(bce)}")
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
        if "checkpoints" in config.emit and bundle.checkpoint is not None:
            path = out / f"model_fl_{arch}.bin"
            path.write_bytes(bundle.checkpoint)
            written.append(path)
    except OSError as exc:
        raise RuntimeError(f"failed writing results under {out}: {exc}") from exc
    return written


def _mac_table(config: ExperimentConfig) -> str:
    cfg = config.scenario
    if config.architecture == "colocated":
        cfg = colocate(build_scenario(cfg)).config
    slp = mac_count_slp(cfg)
    rows = [
        ("detector", "macs_complex1", "macs_real4", "iters"),
        ("fl_per_ap", str(slp.knobs["per_ap_macs"]), str(slp.knobs["per_ap_macs"]), "-"),
        ("fl_network", str(slp.macs), str(slp.macs), "-"),
    ]
    for detector in ("ista", "fista", "amp"):
        iters = config.solver.amp_iters if detector == "amp" else config.solver.max_iters
        c1 = mac_count_amp(cfg, iters, complex_mac_real_ops=1)
        c4 = mac_count_amp(cfg, iters, complex_mac_real_ops=4)
        rows.append((detector, str(c1.macs), str(c4.macs), str(iters)))
    amp_c1 = mac_count_amp(cfg, config.solver.amp_iters, complex_mac_real_ops=1)
    amp_c4 = mac_count_amp(cfg, config.solver.amp_iters, complex_mac_real_ops=4)
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    lines.append(
        "amp/fl network ratio: "
        f"{amp_c1.macs / slp.macs:.3f} (complex MAC = 1 real MAC), "
        f"{amp_c4.macs / slp.macs:.3f} (complex MAC = 4 real MACs)"
    )
    return "\n".join(lines)


def _apply_cli_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config,
            scenario=dataclasses.replace(config.scenario, master_seed=args.seed),
        )
    if getattr(args, "out", None) is not None:
        config = dataclasses.replace(config, output_dir=args.out)
    if getattr(args, "detectors", None) is not None:
        names = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
        config = dataclasses.replace(config, detectors=names)
    if getattr(args, "arch", None) is not None:
        config = dataclasses.replace(config, architecture=args.arch)
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedad",
        description="Seeded activity-detection experiments: federated SLP "
        "detector vs sparse-recovery baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment and write results")
    run_p.add_argument("--config", required=True, help="path to JSON config")
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--out", default=None, help="override output directory")
    run_p.add_argument(
        "--detectors", default=None, help="comma-separated subset of fl,ista,fista,amp"
    )
    run_p.add_argument("--arch", choices=ARCHITECTURES, default=None)

    val_p = sub.add_parser("validate", help="parse and validate a config")
    val_p.add_argument("--config", required=True)

    mac_p = sub.add_parser("macs", help="print the MAC-cost table without running")
    mac_p.add_argument("--config", required=True)
    mac_p.add_argument("--arch", choices=ARCHITECTURES, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        config = _apply_cli_overrides(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print("config ok")
        return EXIT_OK
    if args.command == "macs":
        print(_mac_table(config))
        return EXIT_OK

    try:
        bundle = run_experiment(config)
        written = emit_results(bundle, config)
    except (RuntimeError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(f"wrote {path}")
    for detector, res in bundle.results.items():
        print(f"{detector}: auc={res.roc.auc:.6f} runtime={res.runtime_s:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
