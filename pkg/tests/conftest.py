import numpy as np
import pytest

from aperture_planner.visibility import build_coded_map


def random_masks(rng, K, rows, cols, p=None):
    p = rng.uniform(0.15, 0.85) if p is None else p
    return rng.random((K, rows, cols)) < p


def random_cmap(rng, K, rows, cols, L=24, p=None):
    masks = random_masks(rng, K, rows, cols, p)
    return build_coded_map(list(masks), L=L), masks


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
