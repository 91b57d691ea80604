import numpy as np
import pytest

from hardshap.dataset import Dataset


def random_dataset(rng, n, d=2, n_classes_present=2, ids=None):
    """Random finite features with both labels present (unless n == 1)."""
    labels = rng.integers(0, 2, size=n)
    if n >= 2 and n_classes_present == 2 and len(np.unique(labels)) < 2:
        labels[0], labels[1] = 0, 1
    return Dataset(
        rng.normal(size=(n, d)),
        labels,
        tuple(f"f{j}" for j in range(d)),
        np.arange(n) if ids is None else ids,
    )


@pytest.fixture
def toy_train():
    """(-1, 0), (1, 1), (0, 0) in that row order."""
    return Dataset([[-1.0], [1.0], [0.0]], [0, 1, 0], ("x1",), [0, 1, 2])


@pytest.fixture
def toy_test():
    return Dataset([[0.25]], [0], ("x1",), [0])
