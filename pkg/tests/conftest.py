import numpy as np
import pytest

from stabcvtmle.data import TrialDataset
from stabcvtmle.validation import random_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_data():
    """Small hand-checkable trial: n=6, one covariate, two endpoints."""
    w = np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
    a = np.array([0, 1, 0, 1, 0, 1])
    y = np.array(
        [
            [1.0, 0.5],
            [3.0, 1.0],
            [2.0, 2.0],
            [5.0, 1.5],
            [4.0, 3.0],
            [6.0, 2.5],
        ]
    )
    return TrialDataset(w, a, y, 0.5)


def make_random(seed, **kw):
    return random_dataset(np.random.default_rng(seed), **kw)
