"""Command-line surface: experiment orchestration and artifact persistence.

Subcommands::

    driftcast run            pretrain, train adapters and run every online strategy
    driftcast pretrain       pretrain the forecasters and save checkpoints
    driftcast train-adapter  train adapters on top of saved pretrained checkpoints
    driftcast synth-gen      write the synthetic recurring-drift dataset as CSV
    driftcast export-drift   dump concept and drift vectors over the online range
    driftcast report         rebuild the summary tables from report files

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence, 1 any other failure.
"""
import argparse
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from driftcast import metrics
from driftcast.adapter import DriftAdapter
from driftcast.checkpoint import SECTION_ADAPTER, SECTION_MODEL, CheckpointManager, load_checkpoint
from driftcast.config import ExperimentConfig, Settings, get_settings, parse_config
from driftcast.engine import (
    OnlineConfig,
    RunReport,
    annotate_reports,
    build_adapter,
    concept_trajectory,
    derive_seed,
    pretrain,
    run_online,
    train_adapter,
    training_windows,
)
from driftcast.exceptions import (
    ConfigError,
    ConfigMismatch,
    DataError,
    DriftcastError,
    MissingCheckpoint,
    NumericError,
)
from driftcast.forecasters import ForecastModel, build_model, model_from_checkpoint
from driftcast.seriesdata import (
    GuardedStream,
    SeriesFrame,
    SplitIndices,
    chronological_split,
    generate_synthetic,
    load_csv,
    standardize,
)

MODEL_SEED = 0
ADAPTER_SEED = 1


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, NumericError):
        return 4
    return 1


def configure_logging(settings: Settings) -> None:
    logger.remove()
    logger.add(sys.stderr, level=settings.log_level.upper(), serialize=settings.log_json)


# Data and naming ------------------------------------------------------------


@dataclass
class PreparedData:
    name: str
    frame: SeriesFrame
    split: SplitIndices
    labels: Optional[np.ndarray] = None


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Load or generate the series, split it and z-score it on the training segment."""
    labels = None
    if cfg.dataset == "synthetic":
        frame, labels = generate_synthetic(cfg.synthetic.to_spec())
    else:
        frame = load_csv(cfg.csv_path)
    split = chronological_split(frame, cfg.split_ratios)
    if cfg.standardize:
        frame, _ = standardize(frame, (1, split.train_end))
    logger.info(
        f"Dataset {cfg.dataset} ready",
        variates=frame.n_variates,
        steps=frame.n_steps,
        train_end=split.train_end,
        valid_end=split.valid_end,
    )
    return PreparedData(cfg.dataset, frame, split, labels)


def report_stem(report: RunReport) -> str:
    return (
        f"{report.dataset}_{report.model}_{report.strategy}_{report.variant}"
        f"_H{report.horizon}_seed{report.seed}"
    )


def pretrained_name(dataset: str, model: str, horizon: int, seed: int) -> str:
    return f"{dataset}_{model}_H{horizon}_seed{seed}.pretrained"


def adapter_name(dataset: str, model: str, variant: str, horizon: int, seed: int) -> str:
    return f"{dataset}_{model}_{variant}_H{horizon}_seed{seed}.adapter"


def _copy_model(model: ForecastModel) -> ForecastModel:
    return model_from_checkpoint(model.wiring(), model.param_list())


# Checkpoint helpers ---------------------------------------------------------


def save_pretrained(manager: CheckpointManager, name: str, model: ForecastModel, extra: Dict[str, Any]) -> str:
    return manager.save_checkpoint(name, SECTION_MODEL, model.param_list(), {"wiring": model.wiring(), **extra})


def load_pretrained(path: str) -> ForecastModel:
    metadata, tensors = load_checkpoint(path, SECTION_MODEL)
    return model_from_checkpoint(metadata["wiring"], tensors)


def save_adapted(
    manager: CheckpointManager, name: str, model: ForecastModel, adapter: DriftAdapter, extra: Dict[str, Any]
) -> str:
    """Adapter checkpoints also hold the jointly trained forecaster."""
    metadata = {
        "wiring": model.wiring(),
        "model_tensors": [p.name for p in model.param_list()],
        "adapter": adapter.checkpoint_metadata(),
        **extra,
    }
    return manager.save_checkpoint(name, SECTION_ADAPTER, model.param_list() + adapter.param_list(), metadata)


def load_adapted(path: str) -> Tuple[ForecastModel, DriftAdapter]:
    metadata, tensors = load_checkpoint(path, SECTION_ADAPTER)
    try:
        model_names = set(metadata["model_tensors"])
        model = model_from_checkpoint(metadata["wiring"], [t for t in tensors if t.name in model_names])
        adapter_meta = metadata["adapter"]
    except KeyError as e:
        raise MissingCheckpoint(path, f"missing metadata field {e}") from e
    adapter = DriftAdapter.from_checkpoint(
        adapter_meta, [t for t in tensors if t.name not in model_names], model.registry
    )
    return model, adapter


# Cell groups ----------------------------------------------------------------


@dataclass(frozen=True)
class CellGroup:
    """Every strategy for one (model, horizon, seed); they share a pretrained model."""

    model: str
    horizon: int
    seed: int


@dataclass
class GroupResult:
    group: CellGroup
    reports: List[Dict[str, Any]] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)


def _failure(group: CellGroup, strategy: str, exc: DriftcastError) -> Dict[str, Any]:
    logger.error(f"Cell failed: {type(exc).__name__}: {exc}", model=group.model, horizon=group.horizon, strategy=strategy)
    return {
        "model": group.model,
        "H": group.horizon,
        "seed": group.seed,
        "strategy": strategy,
        "status": "failed",
        "error": f"{type(exc).__name__}: {exc}",
        "exit_code": exit_code_for(exc),
    }


def pretrain_group(
    cfg: ExperimentConfig, data: PreparedData, group: CellGroup, manager: CheckpointManager, reuse: bool = False
) -> ForecastModel:
    name = pretrained_name(data.name, group.model, group.horizon, group.seed)
    if reuse and manager.exists(name):
        return load_pretrained(manager.path_for(name))
    online = cfg.online_config(group.horizon, "frozen")
    model = build_model(
        group.model,
        data.frame.n_variates,
        cfg.lookback,
        group.horizon,
        cfg.revin,
        derive_seed(group.seed, MODEL_SEED),
        **cfg.model_options(group.model),
    )
    train, valid = training_windows(data.frame, data.split, cfg.lookback, group.horizon)
    model, record = pretrain(model, train, valid, online, seed=group.seed)
    save_pretrained(manager, name, model, {"best_epoch": record.best_epoch, "best_valid_mse": record.best_valid_mse})
    return model


def adapt_group(
    cfg: ExperimentConfig,
    data: PreparedData,
    group: CellGroup,
    strategy: str,
    pretrained: ForecastModel,
    manager: CheckpointManager,
    reuse: bool = False,
) -> Tuple[ForecastModel, Optional[DriftAdapter]]:
    """Model and adapter for one strategy, starting from the pretrained model."""
    online = cfg.online_config(group.horizon, strategy)
    if not online.strategy.uses_adapter:
        return _copy_model(pretrained), None
    name = adapter_name(data.name, group.model, online.strategy.name, group.horizon, group.seed)
    if reuse and manager.exists(name):
        return load_adapted(manager.path_for(name))
    model = _copy_model(pretrained)
    adapter = build_adapter(model, online, derive_seed(group.seed, ADAPTER_SEED))
    train, valid = training_windows(data.frame, data.split, cfg.lookback, group.horizon)
    model, adapter, record = train_adapter(model, adapter, train, online, seed=group.seed, valid=valid)
    save_adapted(manager, name, model, adapter, {"best_epoch": record.best_epoch})
    return model, adapter


def run_group(cfg: ExperimentConfig, data: PreparedData, group: CellGroup, out_dir: str, reuse: bool = False) -> GroupResult:
    """Pretrain once, then adapt and run every configured strategy."""
    result = GroupResult(group)
    manager = CheckpointManager(os.path.join(out_dir, "checkpoints"))
    try:
        pretrained = pretrain_group(cfg, data, group, manager, reuse)
    except DriftcastError as e:
        result.failures += [_failure(group, s, e) for s in cfg.strategy]
        return result

    reports: List[RunReport] = []
    for strategy in cfg.strategy:
        online = cfg.online_config(group.horizon, strategy)
        try:
            model, adapter = adapt_group(cfg, data, group, strategy, pretrained, manager, reuse)
            stream = GuardedStream(data.frame, 1, oracle_mode=online.strategy.oracle)
            reports.append(run_online(model, adapter, stream, online, data.split, data.name, group.seed))
        except DriftcastError as e:
            result.failures.append(_failure(group, strategy, e))

    annotate_reports(reports)
    for report in reports:
        stem = report_stem(report)
        path = os.path.join(out_dir, f"{stem}.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        if report.trace is not None:
            report.trace_frame().to_csv(os.path.join(out_dir, f"{stem}_trace.csv"), index=False)
        result.reports.append(report.to_dict())
        result.files.append(os.path.basename(path))
    return result


def _run_group_job(args: Tuple[ExperimentConfig, PreparedData, CellGroup, str, bool]) -> GroupResult:
    return run_group(*args)


# Summaries ------------------------------------------------------------------

SUMMARY_COLUMNS = [
    "dataset", "model", "strategy", "variant", "L", "H", "seed",
    "mse", "mae", "delta_mse", "delta_mae", "improvement_vs_frozen_pct", "n_test", "n_warmup",
]
GROUP_COLUMNS = ["dataset", "model", "H", "strategy", "variant"]


def summarize(reports: Sequence[Dict[str, Any]], out_dir: str) -> pd.DataFrame:
    """Write summary.csv (one row per cell) and summary_mean.csv (over seeds)."""
    table = pd.DataFrame([{key: r.get(key) for key in SUMMARY_COLUMNS} for r in reports], columns=SUMMARY_COLUMNS)
    table = table.sort_values(["dataset", "model", "H", "strategy", "variant", "seed"]).reset_index(drop=True)
    table.to_csv(os.path.join(out_dir, "summary.csv"), index=False)
    if not table.empty:
        mean = table.groupby(GROUP_COLUMNS, sort=True)[["mse", "mae"]].agg(["mean", "std"])
        mean.columns = [f"{a}_{b}" for a, b in mean.columns]
        mean["n_seeds"] = table.groupby(GROUP_COLUMNS, sort=True)["seed"].count()
        mean.reset_index().to_csv(os.path.join(out_dir, "summary_mean.csv"), index=False)
        print(table.to_string(index=False))
    logger.info(f"Summary written to {out_dir}", rows=len(table))
    return table


def write_manifest(results: Sequence[GroupResult], out_dir: str) -> Dict[str, Any]:
    cells = []
    for res in results:
        for report, name in zip(res.reports, res.files):
            cells.append(
                {
                    "model": report["model"],
                    "H": report["H"],
                    "seed": report["seed"],
                    "strategy": report["variant"] if report["variant"] != "none" else report["strategy"],
                    "status": "complete",
                    "report": name,
                }
            )
        cells += res.failures
    cells.sort(key=lambda c: (c["model"], c["H"], c["seed"], c["strategy"]))
    manifest = {"cells": cells, "complete": all(c["status"] == "complete" for c in cells)}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    return manifest


# Subcommands ----------------------------------------------------------------


def _groups(cfg: ExperimentConfig) -> List[CellGroup]:
    return [CellGroup(m, h, s) for m in cfg.models for h in cfg.horizon for s in cfg.seeds]


def cmd_run(cfg: ExperimentConfig, jobs: int = 1, reuse: bool = False) -> int:
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    data = prepare_data(cfg)
    groups = _groups(cfg)
    logger.info(f"Running {len(groups)} cell groups", strategies=cfg.strategy, jobs=jobs)
    work = [(cfg, data, g, out_dir, reuse) for g in groups]
    if jobs > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_group_job, work))
    else:
        results = [_run_group_job(w) for w in work]

    summarize([r for res in results for r in res.reports], out_dir)
    manifest = write_manifest(results, out_dir)
    metrics.export_metrics(out_dir)
    failures = [c for c in manifest["cells"] if c["status"] != "complete"]
    if failures:
        logger.error(f"{len(failures)} cells incomplete; see manifest.json")
        return failures[0]["exit_code"]
    return 0


def cmd_pretrain(cfg: ExperimentConfig) -> int:
    data = prepare_data(cfg)
    manager = CheckpointManager(os.path.join(cfg.output_dir, "checkpoints"))
    for group in _groups(cfg):
        pretrain_group(cfg, data, group, manager)
    return 0


def cmd_train_adapter(cfg: ExperimentConfig) -> int:
    """Train adapters for every adapter-using strategy from saved pretrained models."""
    data = prepare_data(cfg)
    manager = CheckpointManager(os.path.join(cfg.output_dir, "checkpoints"))
    for group in _groups(cfg):
        path = manager.path_for(pretrained_name(data.name, group.model, group.horizon, group.seed))
        pretrained = load_pretrained(path)
        for strategy in cfg.strategy:
            if cfg.online_config(group.horizon, strategy).strategy.uses_adapter:
                adapt_group(cfg, data, group, strategy, pretrained, manager)
    return 0


def cmd_synth_gen(cfg: ExperimentConfig) -> int:
    """Write ``<dataset>.csv`` (timestamp plus variates) and ``<dataset>_regimes.csv``."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    frame, labels = generate_synthetic(cfg.synthetic.to_spec())
    stamps = pd.date_range("2020-01-01", periods=frame.n_steps, freq="h")
    table = pd.DataFrame(frame.values.T, columns=list(frame.variate_names))
    table.insert(0, "date", stamps.strftime("%Y-%m-%d %H:%M:%S"))
    data_path = os.path.join(cfg.output_dir, f"{cfg.dataset}.csv")
    table.to_csv(data_path, index=False)
    regimes = pd.DataFrame({"t": np.arange(1, frame.n_steps + 1), "regime": labels})
    regimes.to_csv(os.path.join(cfg.output_dir, f"{cfg.dataset}_regimes.csv"), index=False)
    logger.info(f"Synthetic dataset written to {data_path}", steps=frame.n_steps, variates=frame.n_variates)
    return 0


def cmd_export_drift(cfg: ExperimentConfig, checkpoint: str) -> int:
    """Concept and drift vectors at every online forecast, one row per (t, kind)."""
    model, adapter = load_adapted(checkpoint)
    data = prepare_data(cfg)
    if data.frame.n_variates != adapter.n_variates:
        raise ConfigMismatch(f"checkpoint expects {adapter.n_variates} variates, dataset has {data.frame.n_variates}")
    stream = GuardedStream(data.frame, 1)
    rows = concept_trajectory(adapter, stream, data.split, model.lookback, model.horizon)
    columns = [f"c{i}" for i in range(adapter.config.d_c)]
    table = pd.DataFrame(np.stack([vec for _, _, vec in rows]), columns=columns)
    table.insert(0, "kind", [kind for _, kind, _ in rows])
    table.insert(0, "t", [t for t, _, _ in rows])
    os.makedirs(cfg.output_dir, exist_ok=True)
    stem = os.path.basename(checkpoint).replace(".ckpt.json", "")
    path = os.path.join(cfg.output_dir, f"{stem}_drift.csv")
    table.to_csv(path, index=False)
    logger.info(f"Drift export written to {path}", rows=len(table))
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    """Rebuild the summaries from the report files already in the output directory."""
    reports = []
    for path in sorted(glob.glob(os.path.join(cfg.output_dir, "*_seed*.json"))):
        with open(path, "r", encoding="utf-8") as f:
            reports.append(json.load(f))
    if not reports:
        logger.warning(f"No reports found in {cfg.output_dir}")
    summarize(reports, cfg.output_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftcast", description="Streaming forecasting under concept drift")
    parser.add_argument("--config", dest="config", help="Experiment config file (key = value lines)")
    parser.add_argument("--out", dest="out", help="Output directory (overrides output_dir)")
    parser.add_argument("--seed", dest="seed", type=int, help="Run a single seed instead of the configured list")
    parser.add_argument("--jobs", dest="jobs", type=int, help="Worker processes for independent cell groups")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Pretrain, adapt and evaluate every configured cell")
    run.add_argument("--reuse-checkpoints", action="store_true", help="Load existing checkpoints instead of retraining")
    sub.add_parser("pretrain", help="Pretrain forecasters and save checkpoints")
    sub.add_parser("train-adapter", help="Train adapters from saved pretrained checkpoints")
    sub.add_parser("synth-gen", help="Write the synthetic dataset as CSV")
    export = sub.add_parser("export-drift", help="Export concept and drift vectors over the online range")
    export.add_argument("--checkpoint", required=True, help="Adapter checkpoint file")
    sub.add_parser("report", help="Rebuild summary tables from report files")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(settings)
    try:
        cfg = parse_config(args.config)
        overrides: Dict[str, Any] = {}
        if args.out:
            overrides["output_dir"] = args.out
        elif args.config is None:
            overrides["output_dir"] = settings.output_dir
        if args.seed is not None:
            overrides["seeds"] = [args.seed]
        cfg = cfg.model_copy(update=overrides)
        jobs = args.jobs if args.jobs is not None else settings.jobs

        if args.command == "run":
            return cmd_run(cfg, jobs, args.reuse_checkpoints)
        if args.command == "pretrain":
            return cmd_pretrain(cfg)
        if args.command == "train-adapter":
            return cmd_train_adapter(cfg)
        if args.command == "synth-gen":
            return cmd_synth_gen(cfg)
        if args.command == "export-drift":
            return cmd_export_drift(cfg, args.checkpoint)
        return cmd_report(cfg)
    except DriftcastError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
