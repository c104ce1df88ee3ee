"""Experiment configuration: one JSON document fully determines a run.

Shape:

    {
      "seed": 7,
      "mode": "parallel",                  # parallel | sequential | single
      "norm_mode": "shared",               # shared | per-task
      "out_dir": "runs/demo",
      "grid": {"n_layers": 4, "n_modules": 6, "path_width": 3,
               "d_in": 8, "d_hid": 16},
      "tasks": [
        {"type": "synthetic", "c": 4, "n_per_class": 50, "margin": 6.0},
        {"type": "csv", "train": "data/t1_train.csv", "val": "data/t1_val.csv"}
      ],
      "train": {"epochs": 30, "batch_size": 16, "batch_set_size": 10,
                "lr0": 0.001, "lr_halve_epochs": [20, 30, 40]},
      "single_task_index": 0,
      "controlled_sharing": null,          # or a setup label like "layer 123"
      "analysis": {"cka": true, "sharing": true, "pair": [0, 1],
                   "capture_n": 200, "kernel": "rbf", "rbf_frac": 0.5,
                   "rbf_sigma": null}
    }

The config hash covers everything except out_dir.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .errors import ConfigError
from .training import TrainConfig

MODES = ("parallel", "sequential", "single")
NORM_MODES = ("shared", "per-task")


@dataclass
class GridConfig:
    n_layers: int
    n_modules: int
    path_width: int
    d_in: int
    d_hid: int


@dataclass
class TaskConfig:
    kind: str                      # "synthetic" | "csv"
    name: str
    c: int = 0                     # synthetic only; csv infers from file
    n_per_class: int = 0
    margin: float = 0.0
    train_csv: str = ""
    val_csv: str = ""


@dataclass
class AnalysisConfig:
    cka: bool = True
    sharing: bool = True
    pair: tuple[int, int] = (0, 1)
    capture_n: int = 200
    kernel: str = "rbf"
    rbf_frac: float = 0.5
    rbf_sigma: float | None = None


@dataclass
class ExperimentConfig:
    seed: int
    mode: str
    norm_mode: str
    out_dir: str
    grid: GridConfig
    tasks: list[TaskConfig]
    train: TrainConfig
    single_task_index: int = 0
    controlled_sharing: str | None = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def canonical_dict(self) -> dict:
        """Every semantically meaningful field; out_dir deliberately absent."""
        return {
            "seed": self.seed,
            "mode": self.mode,
            "norm_mode": self.norm_mode,
            "grid": vars(self.grid),
            "tasks": [vars(t) for t in self.tasks],
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "batch_set_size": self.train.batch_set_size,
                "lr0": self.train.lr0,
                "lr_halve_epochs": list(self.train.lr_halve_epochs),
            },
            "single_task_index": self.single_task_index,
            "controlled_sharing": self.controlled_sharing,
            "analysis": {**vars(self.analysis), "pair": list(self.analysis.pair)},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _require(d: dict, key: str, typ, where: str):
    if key not in d:
        raise ConfigError(f"{where}.{key}" if where else key, "missing")
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or isinstance(v, bool) and typ is int:
        raise ConfigError(f"{where}.{key}" if where else key,
                          f"expected {typ.__name__}, got {type(v).__name__}")
    return v


def _parse_task(i: int, d: dict) -> TaskConfig:
    where = f"tasks[{i}]"
    kind = _require(d, "type", str, where)
    name = d.get("name", f"task{i}")
    if kind == "synthetic":
        c = _require(d, "c", int, where)
        if c < 2:
            raise ConfigError(f"{where}.c", f"class count must be >= 2, got {c}")
        n_per_class = _require(d, "n_per_class", int, where)
        if n_per_class < 5:
            raise ConfigError(f"{where}.n_per_class", f"must be >= 5, got {n_per_class}")
        margin = _require(d, "margin", float, where)
        if margin <= 0:
            raise ConfigError(f"{where}.margin", f"must be positive, got {margin}")
        return TaskConfig(kind=kind, name=name, c=c, n_per_class=n_per_class, margin=margin)
    if kind == "csv":
        return TaskConfig(kind=kind, name=name,
                          train_csv=_require(d, "train", str, where),
                          val_csv=_require(d, "val", str, where))
    raise ConfigError(f"{where}.type", f"must be 'synthetic' or 'csv', got {kind!r}")


def parse_config(doc: dict) -> ExperimentConfig:
    seed = _require(doc, "seed", int, "")
    mode = doc.get("mode", "parallel")
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got {mode!r}")
    norm_mode = doc.get("norm_mode", "shared")
    if norm_mode not in NORM_MODES:
        raise ConfigError("norm_mode", f"must be one of {NORM_MODES}, got {norm_mode!r}")
    out_dir = doc.get("out_dir", "runs/out")

    g = _require(doc, "grid", dict, "")
    grid = GridConfig(
        n_layers=_require(g, "n_layers", int, "grid"),
        n_modules=_require(g, "n_modules", int, "grid"),
        path_width=_require(g, "path_width", int, "grid"),
        d_in=_require(g, "d_in", int, "grid"),
        d_hid=_require(g, "d_hid", int, "grid"),
    )
    if grid.n_layers < 1:
        raise ConfigError("grid.n_layers", "must be >= 1")
    if not (1 <= grid.path_width <= grid.n_modules):
        raise ConfigError("grid.path_width",
                          f"need 1 <= path_width <= n_modules, got "
                          f"{grid.path_width} vs {grid.n_modules}")
    if grid.d_in < 2 or grid.d_hid < 1:
        raise ConfigError("grid.d_in", "need d_in >= 2 and d_hid >= 1")

    raw_tasks = _require(doc, "tasks", list, "")
    if not raw_tasks:
        raise ConfigError("tasks", "at least one task is required")
    tasks = [_parse_task(i, t) for i, t in enumerate(raw_tasks)]

    t = doc.get("train", {})
    try:
        train = TrainConfig(
            epochs=t.get("epochs", 30),
            batch_size=t.get("batch_size", 16),
            batch_set_size=t.get("batch_set_size", 10),
            lr0=t.get("lr0", 1e-3),
            lr_halve_epochs=tuple(t.get("lr_halve_epochs", (20, 30, 40))),
            seed=seed,
            norm_mode=norm_mode,
        )
    except ValueError as e:
        raise ConfigError("train", str(e)) from None
    if train.epochs < 0:
        raise ConfigError("train.epochs", "must be >= 0")
    if train.batch_size < 1 or train.batch_set_size < 1:
        raise ConfigError("train.batch_size", "batch sizes must be >= 1")

    single_task_index = doc.get("single_task_index", 0)
    if not (0 <= single_task_index < len(tasks)):
        raise ConfigError("single_task_index",
                          f"must index a task in [0,{len(tasks)}), got {single_task_index}")

    controlled = doc.get("controlled_sharing")
    if controlled is not None:
        if not isinstance(controlled, str):
            raise ConfigError("controlled_sharing", "must be a setup label string or null")
        if len(tasks) != 2:
            raise ConfigError("controlled_sharing", "controlled setups need exactly 2 tasks")
        if grid.n_modules != 2 * grid.path_width:
            raise ConfigError("controlled_sharing",
                              "controlled setups need n_modules = 2 * path_width")

    a = doc.get("analysis", {})
    default_pair = (0, 1) if len(tasks) >= 2 else (0, 0)
    pair = tuple(a.get("pair", default_pair))
    if len(pair) != 2 or not all(0 <= p < len(tasks) for p in pair):
        raise ConfigError("analysis.pair", f"must name two registered tasks, got {pair}")
    kernel = a.get("kernel", "rbf")
    if kernel not in ("linear", "rbf"):
        raise ConfigError("analysis.kernel", f"must be 'linear' or 'rbf', got {kernel!r}")
    analysis = AnalysisConfig(
        cka=a.get("cka", True),
        sharing=a.get("sharing", True),
        pair=pair,
        capture_n=a.get("capture_n", 200),
        kernel=kernel,
        rbf_frac=a.get("rbf_frac", 0.5),
        rbf_sigma=a.get("rbf_sigma"),
    )
    if analysis.capture_n < 3:
        raise ConfigError("analysis.capture_n", "must be >= 3")

    return ExperimentConfig(seed=seed, mode=mode, norm_mode=norm_mode, out_dir=out_dir,
                            grid=grid, tasks=tasks, train=train,
                            single_task_index=single_task_index,
                            controlled_sharing=controlled, analysis=analysis)


def load_config(path) -> ExperimentConfig:
    p = FsPath(path)
    if not p.exists():
        raise ConfigError("(file)", f"no such config file: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError("(file)", f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("(file)", "top-level JSON value must be an object")
    return parse_config(doc)
