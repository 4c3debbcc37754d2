import numpy as np
import pytest

from setpred.data import gaussian_blobs
from setpred.inference import ClassDist


def random_dist(rng, k, alpha=1.0) -> ClassDist:
    return ClassDist.from_masses(rng.dirichlet(np.full(k, alpha)))


@pytest.fixture(scope="session")
def blob_pool():
    """One synthetic pool reused by several suites (train/test split it)."""
    dataset, centers = gaussian_blobs(12, 10, 3000, seed=101, sep=3.0)
    return dataset, centers
