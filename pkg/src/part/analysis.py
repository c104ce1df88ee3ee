"""Module-sharing profiles and CKA representation-similarity machinery.

CKA here is the biased HSIC estimator normalized to [0,1]:
cka(X,Y) = hsic(Kx,Ky)/sqrt(hsic(Kx,Kx) hsic(Ky,Ky)) with
hsic(K,L) = tr(K H L H)/(n-1)^2, H the centering matrix. Kernels: linear
(K = X X^T) or RBF with bandwidth sigma = frac * median pairwise distance
of the respective representation (an absolute sigma is also accepted).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateRepresentation, InputError
from .net import ModuleGrid, Path, TaskSpec, forward_task


# ---------------------------------------------------------------------------
# sharing profiles

@dataclass
class SharingProfile:
    """How many grid cells are used by exactly t tasks, overall and per layer."""

    histogram: dict[int, int]
    per_layer: list[dict[int, int]]
    n_layers: int
    n_modules: int
    n_tasks: int

    def to_json_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "n_modules": self.n_modules,
            "n_tasks": self.n_tasks,
            "histogram": {str(t): c for t, c in sorted(self.histogram.items())},
            "per_layer": [
                {str(t): c for t, c in sorted(h.items())} for h in self.per_layer
            ],
        }


def sharing_profile(paths: list[Path], M: int, L: int) -> SharingProfile:
    """Count task-usage multiplicity of every (layer, module) cell."""
    usage = np.zeros((L, M), dtype=np.int64)
    for path in paths:
        if path.depth != L:
            raise InputError(f"path depth {path.depth} != L={L}")
        for (l, m) in path.modules():
            if m >= M:
                raise InputError(f"path selects module {m} >= M={M}")
            usage[l, m] += 1
    histogram: dict[int, int] = {}
    per_layer = []
    for l in range(L):
        counts = np.bincount(usage[l], minlength=1)
        layer_hist = {t: int(c) for t, c in enumerate(counts) if c > 0}
        per_layer.append(layer_hist)
        for t, c in layer_hist.items():
            histogram[t] = histogram.get(t, 0) + c
    return SharingProfile(histogram=histogram, per_layer=per_layer,
                          n_layers=L, n_modules=M, n_tasks=len(paths))


def expected_sharing_count(M: int, N: int, L: int, k: int, t: int) -> float:
    """Closed-form expected number of cells used by exactly t of k random
    paths: each cell is on a given task's path with probability N/M,
    independently across tasks, so the count is Binomial(k, N/M) per cell."""
    p = N / M
    return L * M * math.comb(k, t) * p**t * (1 - p) ** (k - t)


def shared_layers_from_label(label: str, n_layers: int) -> tuple[int, ...]:
    """Decode a controlled-sharing setup label into 0-based layer indices.

    'no layer' shares nothing; 'layer 13' shares layers 1 and 3 (1-indexed
    single digits, so depth is capped at 9 for labelled setups).
    """
    text = label.strip().lower()
    if text == "no layer":
        return ()
    if text.startswith("layer "):
        digits = text[len("layer "):].strip()
        if digits and all(ch.isdigit() and ch != "0" for ch in digits):
            layers = tuple(sorted(int(ch) - 1 for ch in set(digits)))
            if layers and layers[-1] >= n_layers:
                raise InputError(
                    f"setup {label!r} names layer {layers[-1] + 1} but depth is {n_layers}")
            return layers
    raise InputError(f"unrecognized sharing setup label: {label!r}")


# ---------------------------------------------------------------------------
# HSIC / CKA

def _center(K: np.ndarray) -> np.ndarray:
    # H K H without materializing H
    row = K.mean(axis=0, keepdims=True)
    col = K.mean(axis=1, keepdims=True)
    return K - row - col + K.mean()


def hsic(K: np.ndarray, Lm: np.ndarray) -> float:
    """Biased HSIC estimate tr(K H Lm H)/(n-1)^2 for symmetric Gram matrices."""
    K = np.asarray(K, dtype=np.float64)
    Lm = np.asarray(Lm, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"K must be square, got {K.shape}")
    if Lm.shape != K.shape:
        raise InputError(f"gram shapes differ: {K.shape} vs {Lm.shape}")
    n = K.shape[0]
    if n < 3:
        raise InputError(f"need n >= 3 for centering, got {n}")
    if not np.allclose(K, K.T, atol=1e-10) or not np.allclose(Lm, Lm.T, atol=1e-10):
        raise InputError("gram matrices must be symmetric")
    return float(np.sum(_center(K) * _center(Lm)) / (n - 1) ** 2)


def _gram_linear(X: np.ndarray) -> np.ndarray:
    return X @ X.T


def _gram_rbf(X: np.ndarray, frac: float, sigma: Optional[float]) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    if sigma is None:
        iu = np.triu_indices(X.shape[0], k=1)
        med = float(np.median(np.sqrt(d2[iu])))
        if med == 0.0:
            raise DegenerateRepresentation(
                "zero median pairwise distance: representation is constant")
        sigma = frac * med
    if sigma <= 0:
        raise InputError(f"rbf sigma must be positive, got {sigma}")
    K = np.exp(-d2 / (2.0 * sigma * sigma))
    # exact symmetry despite float summation order
    return (K + K.T) / 2.0


def cka(X: np.ndarray, Y: np.ndarray, kernel: str = "linear",
        rbf_frac: float = 0.5, rbf_sigma: Optional[float] = None) -> float:
    """Representation similarity in [0,1] between two sample-aligned sets.

    kernel 'linear' or 'rbf'; for 'rbf' the bandwidth is rbf_frac times
    the median pairwise distance of each set separately, unless an
    absolute rbf_sigma is given. Raises DegenerateRepresentation when a
    set is constant across samples (self-HSIC zero), rather than
    reporting a silent 0.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise InputError("representations must be 2-D (samples x features)")
    if X.shape[0] != Y.shape[0]:
        raise InputError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] < 3:
        raise InputError(f"need n >= 3 samples, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise InputError("representations contain non-finite values")
    if kernel == "linear":
        Kx, Ky = _gram_linear(X), _gram_linear(Y)
    elif kernel == "rbf":
        Kx = _gram_rbf(X, rbf_frac, rbf_sigma)
        Ky = _gram_rbf(Y, rbf_frac, rbf_sigma)
    else:
        raise InputError(f"kernel must be 'linear' or 'rbf', got {kernel!r}")
    hxx = hsic(Kx, Kx)
    hyy = hsic(Ky, Ky)
    if hxx <= 1e-300 or hyy <= 1e-300:
        raise DegenerateRepresentation("constant representation: self-HSIC is zero")
    return hsic(Kx, Ky) / math.sqrt(hxx * hyy)


def kernel_label(kernel: str, rbf_frac: float = 0.5,
                 rbf_sigma: Optional[float] = None) -> str:
    if kernel == "linear":
        return "linear"
    if rbf_sigma is not None:
        return f"rbf(sigma={rbf_sigma:g})"
    return f"rbf(frac={rbf_frac:g})"


# ---------------------------------------------------------------------------
# activation capture

@dataclass
class ActivationSet:
    """One task's representations at one layer: the summed layer output the
    next layer consumes, plus each selected module's pre-sum output."""

    task_id: int
    layer: int
    rep: np.ndarray
    per_module: dict[int, np.ndarray]


def balanced_sample(dataset, n: int, rng: Optional[np.random.Generator] = None):
    """Draw n samples with per-class quotas differing by at most one.

    Deterministic (first occurrences per class) unless an rng is given.
    Errors out if any class cannot fill its quota; never truncates.
    """
    if n < dataset.c:
        raise InputError(f"need at least one sample per class: n={n} < c={dataset.c}")
    if n > dataset.n:
        raise InputError(f"requested {n} samples but dataset has {dataset.n}")
    base, extra = divmod(n, dataset.c)
    picks = []
    for k in range(dataset.c):
        quota = base + (1 if k < extra else 0)
        kidx = np.flatnonzero(dataset.labels == k)
        if len(kidx) < quota:
            raise InputError(
                f"class {k} has {len(kidx)} samples, quota is {quota}")
        if rng is not None:
            kidx = rng.permutation(kidx)
        picks.append(kidx[:quota])
    idx = np.concatenate(picks)
    return dataset.features[idx], dataset.labels[idx]


def _check_balance(labels: np.ndarray) -> None:
    counts = np.bincount(labels)
    if counts.max() - counts.min() > 1:
        raise InputError(
            f"sample is class-imbalanced beyond +-1: counts {counts.tolist()}")


def capture_activations(grid: ModuleGrid, task: TaskSpec, samples,
                        rng: Optional[np.random.Generator] = None) -> list[ActivationSet]:
    """Eval-mode layer representations for a class-balanced sample.

    `samples` is either a count (drawn from the task's validation set) or
    an explicit (features, labels) pair, which must be balanced within
    one sample per class.
    """
    if isinstance(samples, (int, np.integer)):
        if task.val_ds is None:
            raise InputError(f"task {task.id} has no validation dataset to sample")
        X, y = balanced_sample(task.val_ds, int(samples), rng)
    else:
        X, y = samples
        y = np.asarray(y)
        _check_balance(y)
    _, tape = forward_task(grid, task, X, mode="eval")
    sets = []
    for l in range(grid.n_layers):
        recs = tape.records[l]
        sets.append(ActivationSet(
            task_id=task.id, layer=l, rep=tape.layer_sum(l),
            per_module={m: recs[m].out for m in sorted(recs)},
        ))
    return sets


# ---------------------------------------------------------------------------
# layerwise reports

@dataclass
class LayerCka:
    layer: int
    task_cka: Optional[float]          # None if degenerate, see flag
    task_cka_flag: Optional[str]
    labels: list[str]                  # "t{task}:m{module}" per matrix row
    matrix: list[list[Optional[float]]]
    shared_modules: list[int]

    def to_json_dict(self) -> dict:
        return {
            "layer": self.layer,
            "task_cka": self.task_cka,
            "task_cka_flag": self.task_cka_flag,
            "labels": self.labels,
            "matrix": self.matrix,
            "shared_modules": self.shared_modules,
        }


@dataclass
class CkaReport:
    """Per-layer similarity between two tasks under one sharing setup.

    The module matrix is the symmetric all-pairs CKA over the union of
    both tasks' module representations at that layer (rows labelled
    t{id}:m{idx}); the cross-task heatmap of interest is its off-diagonal
    block. Raw values are kept as computed; clamp only for display.
    """

    setup: str
    kernel: str
    task_a: int
    task_b: int
    layers: list[LayerCka]
    n_samples: int = 0

    def to_json_dict(self) -> dict:
        return {
            "setup": self.setup,
            "kernel": self.kernel,
            "task_a": self.task_a,
            "task_b": self.task_b,
            "n_samples": self.n_samples,
            "layers": [l.to_json_dict() for l in self.layers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def task_curve(self) -> list[Optional[float]]:
        return [l.task_cka for l in self.layers]

    def heatmap_csv(self, layer: int) -> str:
        """CSV of the layer's module-pairwise matrix, values clamped to
        [0,1] for display; shared modules annotated in a comment line."""
        lc = self.layers[layer]
        shared = ",".join(str(m) for m in lc.shared_modules)
        lines = [f"# shared_modules: {shared}" if shared else "# shared_modules: none"]
        lines.append("," + ",".join(lc.labels))
        for name, row in zip(lc.labels, lc.matrix):
            cells = []
            for v in row:
                if v is None:
                    cells.append("nan")
                else:
                    cells.append(f"{min(max(v, 0.0), 1.0):.6f}")
            lines.append(name + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def _safe_cka(X, Y, kernel, rbf_frac, rbf_sigma):
    try:
        return cka(X, Y, kernel=kernel, rbf_frac=rbf_frac, rbf_sigma=rbf_sigma), None
    except DegenerateRepresentation as e:
        return None, str(e)


def layerwise_cka_report(set_a: list[ActivationSet], set_b: list[ActivationSet],
                         kernel: str = "rbf", rbf_frac: float = 0.5,
                         rbf_sigma: Optional[float] = None,
                         setup: str = "") -> CkaReport:
    """Task-vs-task CKA per layer plus the all-pairs module matrix."""
    if len(set_a) != len(set_b):
        raise InputError(f"layer counts differ: {len(set_a)} vs {len(set_b)}")
    if not set_a:
        raise InputError("empty activation sets")
    if set_a[0].rep.shape[0] != set_b[0].rep.shape[0]:
        raise InputError("activation sets have different sample counts")
    layers = []
    for la, lb in zip(set_a, set_b):
        task_val, task_flag = _safe_cka(la.rep, lb.rep, kernel, rbf_frac, rbf_sigma)
        entries = (
            [(f"t{la.task_id}:m{m}", rep) for m, rep in la.per_module.items()]
            + [(f"t{lb.task_id}:m{m}", rep) for m, rep in lb.per_module.items()]
        )
        labels = [name for name, _ in entries]
        p = len(entries)
        matrix: list[list[Optional[float]]] = [[None] * p for _ in range(p)]
        for i in range(p):
            for j in range(i, p):
                v, _flag = _safe_cka(entries[i][1], entries[j][1],
                                     kernel, rbf_frac, rbf_sigma)
                matrix[i][j] = v
                matrix[j][i] = v
        shared = sorted(set(la.per_module) & set(lb.per_module))
        layers.append(LayerCka(layer=la.layer, task_cka=task_val,
                               task_cka_flag=task_flag, labels=labels,
                               matrix=matrix, shared_modules=shared))
    return CkaReport(setup=setup, kernel=kernel_label(kernel, rbf_frac, rbf_sigma),
                     task_a=set_a[0].task_id, task_b=set_b[0].task_id,
                     layers=layers, n_samples=set_a[0].rep.shape[0])


def average_cka_reports(reports: list[CkaReport]) -> CkaReport:
    """Elementwise mean of CKA values across runs of the same setup.

    Degenerate (None) entries are skipped per element; an element that is
    None in every report stays None.
    """
    if not reports:
        raise InputError("no reports to average")
    first = reports[0]
    for r in reports[1:]:
        if r.setup != first.setup or r.kernel != first.kernel:
            raise InputError("reports must share setup and kernel to average")
        if len(r.layers) != len(first.layers):
            raise InputError("reports must have the same layer count")

    def mean_opt(values):
        vals = [v for v in values if v is not None]
        return float(np.mean(vals)) if vals else None

    layers = []
    for li, ref in enumerate(first.layers):
        for r in reports[1:]:
            if r.layers[li].labels != ref.labels:
                raise InputError("reports must have matching module labels to average")
        task_vals = [r.layers[li].task_cka for r in reports]
        p = len(ref.labels)
        matrix = [
            [mean_opt([r.layers[li].matrix[i][j] for r in reports]) for j in range(p)]
            for i in range(p)
        ]
        flags = [r.layers[li].task_cka_flag for r in reports if r.layers[li].task_cka_flag]
        layers.append(LayerCka(layer=ref.layer, task_cka=mean_opt(task_vals),
                               task_cka_flag=flags[0] if flags else None,
                               labels=list(ref.labels), matrix=matrix,
                               shared_modules=list(ref.shared_modules)))
    return CkaReport(setup=first.setup, kernel=first.kernel, task_a=first.task_a,
                     task_b=first.task_b, layers=layers, n_samples=first.n_samples)
