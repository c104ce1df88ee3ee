"""Config-driven experiment orchestration.

Builds the full runtime state (datasets, grid, paths) deterministically
from an ExperimentConfig, runs the configured learning procedure, and
writes the run artifacts (report.json, checkpoint, analysis outputs).
The CLI is a thin wrapper over these functions.
"""

from __future__ import annotations

import json
from pathlib import Path as FsPath

import numpy as np

from .analysis import (
    capture_activations,
    expected_sharing_count,
    layerwise_cka_report,
    shared_layers_from_label,
    sharing_profile,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import gen_synthetic_task, load_csv, oversample_to_equal, standardize_pair, write_csv
from .errors import ConfigError, InputError
from .net import ModuleGrid, assign_random_path, build_controlled_paths, register_task
from .training import (
    STREAM_ANALYSIS,
    STREAM_DATA,
    STREAM_OVERSAMPLE,
    STREAM_PATHS,
    RunReport,
    derive_rng,
    train_parallel,
    train_sequential,
    train_single,
    validate,
)

CHECKPOINT_NAME = "checkpoint.part"
REPORT_NAME = "report.json"


def build_datasets(cfg: ExperimentConfig):
    """(train, val) per task, standardized, trains oversampled to equal size."""
    data_rng = derive_rng(cfg.seed, STREAM_DATA)
    trains, vals = [], []
    for i, tc in enumerate(cfg.tasks):
        if tc.kind == "synthetic":
            train, val = gen_synthetic_task(data_rng, tc.c, tc.n_per_class,
                                            cfg.grid.d_in, tc.margin, name=tc.name)
        else:
            train = load_csv(tc.train_csv, name=f"{tc.name}-train")
            val = load_csv(tc.val_csv, name=f"{tc.name}-val")
            if train.c != val.c:
                raise ConfigError(f"tasks[{i}]",
                                  f"train has {train.c} classes, val has {val.c}")
            if train.d != cfg.grid.d_in or val.d != cfg.grid.d_in:
                raise ConfigError(f"tasks[{i}]",
                                  f"CSV feature width {train.d} != grid d_in {cfg.grid.d_in}")
            train, val = standardize_pair(train, val)
        trains.append(train)
        vals.append(val)
    ovs_rng = derive_rng(cfg.seed, STREAM_OVERSAMPLE)
    trains = oversample_to_equal(trains, ovs_rng)
    return list(zip(trains, vals))


def build_experiment(cfg: ExperimentConfig) -> ModuleGrid:
    """Grid with all tasks registered, paths assigned, datasets attached."""
    pairs = build_datasets(cfg)
    g = cfg.grid
    grid = ModuleGrid(g.n_layers, g.n_modules, g.d_in, g.d_hid,
                      norm_mode=cfg.norm_mode, seed=cfg.seed)
    if cfg.controlled_sharing is not None:
        shared = shared_layers_from_label(cfg.controlled_sharing, g.n_layers)
        paths = list(build_controlled_paths(g.n_layers, g.n_modules,
                                            g.path_width, shared))
    else:
        path_rng = derive_rng(cfg.seed, STREAM_PATHS)
        paths = [assign_random_path(g.n_modules, g.path_width, g.n_layers, path_rng)
                 for _ in cfg.tasks]
    for tc, (train, val), path in zip(cfg.tasks, pairs, paths):
        task = register_task(grid, train.c, name=tc.name, train_ds=train, val_ds=val)
        task.path = path
    return grid


def attach_datasets(grid: ModuleGrid, cfg: ExperimentConfig) -> None:
    """Rebuild the config's datasets onto a checkpoint-loaded grid."""
    if len(grid.tasks) != len(cfg.tasks):
        raise InputError(f"checkpoint has {len(grid.tasks)} tasks, "
                         f"config defines {len(cfg.tasks)}")
    pairs = build_datasets(cfg)
    for task, (train, val) in zip(grid.tasks, pairs):
        if task.c != train.c:
            raise InputError(f"task {task.id}: checkpoint has {task.c} classes, "
                             f"config data has {train.c}")
        task.train_ds = train
        task.val_ds = val


def run_experiment(cfg: ExperimentConfig, out_dir=None, log=None) -> RunReport:
    """Train per cfg.mode, write report.json and a checkpoint, return the report."""
    out = FsPath(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = build_experiment(cfg)
    h = cfg.config_hash()
    if cfg.mode == "parallel":
        report = train_parallel(grid, grid.tasks, cfg.train, config_hash=h, log=log)
    elif cfg.mode == "sequential":
        report = train_sequential(grid, grid.tasks, cfg.train, config_hash=h, log=log)
    else:
        report = train_single(grid, grid.tasks[cfg.single_task_index], cfg.train,
                              config_hash=h, log=log)
    write_report(report, out / REPORT_NAME)
    save_checkpoint(grid, out / CHECKPOINT_NAME)
    return report


def write_report(report: RunReport, path) -> None:
    FsPath(path).write_text(
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")


def load_report(path) -> RunReport:
    return RunReport.from_json_dict(json.loads(FsPath(path).read_text(encoding="utf-8")))


def generate_data_files(cfg: ExperimentConfig, out_dir=None) -> list[str]:
    """Materialize every synthetic task's splits as CSV under out/data/."""
    out = FsPath(out_dir if out_dir is not None else cfg.out_dir) / "data"
    out.mkdir(parents=True, exist_ok=True)
    pairs = build_datasets(cfg)
    written = []
    for tc, (train, val) in zip(cfg.tasks, pairs):
        if tc.kind != "synthetic":
            continue
        for split, ds in (("train", train), ("val", val)):
            path = out / f"{tc.name}_{split}.csv"
            write_csv(path, ds)
            written.append(str(path))
    return written


def evaluate_checkpoint(ckpt_path, cfg: ExperimentConfig) -> list[dict]:
    grid = load_checkpoint(ckpt_path)
    attach_datasets(grid, cfg)
    return [{"task": t.id, "name": t.name, "val_acc": validate(grid, t)}
            for t in grid.tasks]


def analyze_checkpoint(ckpt_path, cfg: ExperimentConfig, out_dir=None) -> dict:
    """capture_activations + layerwise CKA + sharing profile, per toggles.

    Writes cka_report.json, per-layer heatmap CSVs, and
    sharing_profile.json into out/analysis/; returns the artifact index.
    """
    out = FsPath(out_dir if out_dir is not None else cfg.out_dir) / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    grid = load_checkpoint(ckpt_path)
    attach_datasets(grid, cfg)
    artifacts: dict = {"out_dir": str(out)}

    if cfg.analysis.sharing:
        profile = sharing_profile([t.path for t in grid.tasks],
                                  grid.n_modules, grid.n_layers)
        path = out / "sharing_profile.json"
        path.write_text(json.dumps(profile.to_json_dict(), sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        artifacts["sharing_profile"] = str(path)

    if cfg.analysis.cka:
        a_id, b_id = cfg.analysis.pair
        rng = derive_rng(cfg.seed, STREAM_ANALYSIS)
        set_a = capture_activations(grid, grid.tasks[a_id], cfg.analysis.capture_n, rng)
        set_b = capture_activations(grid, grid.tasks[b_id], cfg.analysis.capture_n, rng)
        setup = cfg.controlled_sharing if cfg.controlled_sharing is not None else "random"
        report = layerwise_cka_report(set_a, set_b, kernel=cfg.analysis.kernel,
                                      rbf_frac=cfg.analysis.rbf_frac,
                                      rbf_sigma=cfg.analysis.rbf_sigma, setup=setup)
        path = out / "cka_report.json"
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        artifacts["cka_report"] = str(path)
        heatmaps = []
        for l in range(len(report.layers)):
            hpath = out / f"cka_heatmap_layer{l}.csv"
            hpath.write_text(report.heatmap_csv(l), encoding="utf-8")
            heatmaps.append(str(hpath))
        artifacts["heatmaps"] = heatmaps
    return artifacts


def profile_sharing_trials(cfg: ExperimentConfig, trials: int = 1) -> dict:
    """Monte-Carlo sharing profile over `trials` random path assignments,
    with the binomial expectation per multiplicity alongside."""
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    g = cfg.grid
    k = len(cfg.tasks)
    rng = derive_rng(cfg.seed, STREAM_PATHS)
    sums = np.zeros(k + 1)
    for _ in range(trials):
        paths = [assign_random_path(g.n_modules, g.path_width, g.n_layers, rng)
                 for _ in range(k)]
        profile = sharing_profile(paths, g.n_modules, g.n_layers)
        for t, count in profile.histogram.items():
            sums[t] += count
    return {
        "trials": trials,
        "n_tasks": k,
        "mean_histogram": {str(t): sums[t] / trials for t in range(k + 1)},
        "expected_histogram": {
            str(t): expected_sharing_count(g.n_modules, g.path_width, g.n_layers, k, t)
            for t in range(k + 1)
        },
    }


def compare_reports(a: RunReport, b: RunReport) -> dict:
    """Per-task and mean accuracy deltas (A minus B) for matching task lists."""
    if a.tasks != b.tasks:
        raise InputError("reports cover different task lists; nothing to compare")
    rows = []
    for ta, tb in zip(a.final, b.final):
        if ta["task"] != tb["task"]:
            raise InputError("final task ordering differs between reports")
        rows.append({
            "task": ta["task"],
            "acc_a": ta["val_acc"],
            "acc_b": tb["val_acc"],
            "delta": ta["val_acc"] - tb["val_acc"],
        })
    mean_a = float(np.mean([r["acc_a"] for r in rows]))
    mean_b = float(np.mean([r["acc_b"] for r in rows]))
    return {
        "mode_a": a.mode,
        "mode_b": b.mode,
        "tasks": rows,
        "mean_a": mean_a,
        "mean_b": mean_b,
        "mean_delta": mean_a - mean_b,
    }
