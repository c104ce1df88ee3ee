import numpy as np
import pytest

from part import ModuleGrid, assign_random_path, register_task
from part.data import Dataset, gen_synthetic_task


def make_grid(L=2, M=4, N=2, d_in=6, d_hid=10, norm_mode="shared", seed=0,
              class_counts=(3, 2), rng=None, randomize_norms=False):
    """Small grid with registered tasks and random paths, ready to forward."""
    rng = rng or np.random.default_rng(seed)
    grid = ModuleGrid(L, M, d_in, d_hid, norm_mode=norm_mode, seed=seed)
    for c in class_counts:
        task = register_task(grid, c)
        task.path = assign_random_path(M, N, L, rng)
    if randomize_norms:
        for layer in grid.layers:
            for blk in layer:
                for inst in blk.norms.values():
                    inst.gamma = rng.uniform(0.5, 1.5, d_hid)
                    inst.beta = rng.normal(0.0, 0.3, d_hid)
                    inst.run_mean = rng.normal(0.0, 0.5, d_hid)
                    inst.run_var = rng.uniform(0.5, 2.0, d_hid)
    return grid


def make_dataset(rng, n=30, d=6, c=3, name="ds"):
    """Quick labelled blob dataset with every class present."""
    labels = np.arange(n) % c
    feats = rng.normal(size=(n, d)) + labels[:, None]
    return Dataset(features=feats, labels=labels, c=c, name=name)


def attach_synthetic(grid, rng, n_per_class=30, margin=6.0):
    """Give every registered task its own synthetic train/val pair."""
    for task in grid.tasks:
        train, val = gen_synthetic_task(rng, task.c, n_per_class, grid.d_in,
                                        margin, name=f"task{task.id}")
        task.train_ds = train
        task.val_ds = val
    return grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
