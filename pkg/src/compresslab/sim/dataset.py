"""Synthetic classification data for the compression simulator.

Four Gaussian blobs in R^16 whose centers are rescaled until every pair is
at least four standard deviations apart, which keeps the task learnable by
a tiny MLP.  Generation is fully determined by the seed (PCG64).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_FEATURES = 16
N_CLASSES = 4
SIGMA = 0.5
MIN_CENTER_SEPARATION = 4 * SIGMA


@dataclass
class SynthDataset:
    seed: int
    centers: np.ndarray           # (classes, features)
    x_train: np.ndarray
    y_train: np.ndarray
    groups_train: list[str]
    x_test: np.ndarray
    y_test: np.ndarray
    groups_test: list[str]
    class_names: list[str]

    @property
    def test_ids(self) -> list[str]:
        return [f"t{i:04d}" for i in range(len(self.y_test))]


def make_dataset(seed: int, n_train: int = 240, n_test: int = 240,
                 class_weights: list[float] | None = None,
                 group_of_class: dict[int, str] | None = None) -> SynthDataset:
    """Sample train/test splits of labeled Gaussian blobs.

    ``class_weights`` skews the label distribution (used to create a rare
    group); ``group_of_class`` maps class index -> group label, defaulting
    to one group per class.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(N_CLASSES, N_FEATURES))
    min_dist = min(
        float(np.linalg.norm(centers[i] - centers[j]))
        for i in range(N_CLASSES) for j in range(i + 1, N_CLASSES))
    # Normalize the closest pair to exactly the minimum separation: the task
    # stays learnable but not trivially so, which keeps compression damage
    # visible in the metrics.
    centers *= MIN_CENTER_SEPARATION / min_dist

    weights = np.asarray(class_weights if class_weights is not None
                         else [1.0 / N_CLASSES] * N_CLASSES, dtype=float)
    weights = weights / weights.sum()

    def split(n: int) -> tuple[np.ndarray, np.ndarray]:
        y = rng.choice(N_CLASSES, size=n, p=weights)
        x = centers[y] + rng.normal(0.0, SIGMA, size=(n, N_FEATURES))
        return x, y

    x_train, y_train = split(n_train)
    x_test, y_test = split(n_test)

    class_names = [f"class_{i}" for i in range(N_CLASSES)]
    if group_of_class is None:
        group_of_class = {i: class_names[i] for i in range(N_CLASSES)}
    groups_train = [group_of_class[int(y)] for y in y_train]
    groups_test = [group_of_class[int(y)] for y in y_test]

    return SynthDataset(seed=seed, centers=centers,
                        x_train=x_train, y_train=y_train, groups_train=groups_train,
                        x_test=x_test, y_test=y_test, groups_test=groups_test,
                        class_names=class_names)


def make_imbalanced_dataset(seed: int, n_train: int = 480, n_test: int = 1000,
                            rare_class: int = 3) -> SynthDataset:
    """Dataset with one intentionally rare group (1:9 against the rest)."""
    weights = [0.3, 0.3, 0.3, 0.3]
    weights[rare_class] = 0.1
    total = sum(weights)
    weights = [w / total for w in weights]
    groups = {i: ("rare" if i == rare_class else "common") for i in range(N_CLASSES)}
    return make_dataset(seed, n_train=n_train, n_test=n_test,
                        class_weights=weights, group_of_class=groups)
