import numpy as np
import pytest

from lac import pool as pm


def router_config(seed=7):
    """4-class pool: a router that signals which half the label is in,
    plus two perfect specialists that emit confident junk off-domain.

    Balanced generation makes the oracle values exact: best fixed pair
    0.75, adaptive depth-2 policy 1.0.
    """
    return pm.SyntheticPoolConfig(
        n_classes=4,
        classifiers=[
            {"name": "R", "class_subset": [0, 1], "in_subset_accuracy": 0.5,
             "off_subset_behavior": "uniform_over_subset"},
            {"name": "S01", "class_subset": [0, 1], "in_subset_accuracy": 1.0,
             "off_subset_behavior": "confident_random_in_subset"},
            {"name": "S23", "class_subset": [2, 3], "in_subset_accuracy": 1.0,
             "off_subset_behavior": "confident_random_in_subset"},
        ],
        examples_per_split={"train": 2048, "val": 512, "test": 1024},
        seed=seed, balanced=True)


@pytest.fixture(scope="session")
def router_pool():
    return pm.generate_synthetic(router_config())


@pytest.fixture(scope="session")
def perfect_pool():
    """Single always-correct classifier over 3 classes."""
    cfg = pm.SyntheticPoolConfig(
        n_classes=3,
        classifiers=[{"name": "perfect", "class_subset": [0, 1, 2],
                      "in_subset_accuracy": 1.0}],
        examples_per_split={"train": 600, "test": 300},
        seed=3)
    return pm.generate_synthetic(cfg)


def toy_blobs(n_classes=3, n_per_class=200, dim=2, spread=2.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 3.0, size=(n_classes, dim))
    xs, ys = [], []
    for c in range(n_classes):
        xs.append(centers[c] + rng.normal(0.0, spread,
                                          size=(n_per_class, dim)))
        ys.append(np.full(n_per_class, c))
    x = np.concatenate(xs).astype(np.float32)
    y = np.concatenate(ys).astype(np.int64)
    perm = rng.permutation(len(x))
    return x[perm], y[perm]
