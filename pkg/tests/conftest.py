import numpy as np
import pytest

from rbcsmooth.lpcore import Sample
from rbcsmooth.montecarlo import dgp_draw


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def sim_sample():
    return dgp_draw(500, np.random.default_rng(7))


def make_sample(n, rng, fn=np.sin, noise=0.3, cluster=None):
    x = np.sort(rng.uniform(0.0, 1.0, n))
    y = fn(x) + noise * rng.standard_normal(n)
    return Sample(x, y, cluster)
