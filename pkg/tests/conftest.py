import numpy as np
import pytest

from refocus3d.geometry import PointCloud
from refocus3d.network import init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_cloud(rng):
    return PointCloud(rng.standard_normal((50, 3)).astype(np.float32))


@pytest.fixture
def small_params():
    # random head so logits actually depend on the input
    return init_params(4, seed=3, zero_last=False)
