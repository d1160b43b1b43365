import numpy as np
import pytest

from quadtilt.base_dist import FiniteAtomBase


@pytest.fixture
def four_atoms():
    locs = np.array([[1.0, 0.0], [0.0, 0.8], [-0.6, -0.6], [0.3, -0.9]])
    return FiniteAtomBase.from_weights(locs, [0.1, 0.2, 0.3, 0.4])


@pytest.fixture
def cube4():
    return FiniteAtomBase.hypercube(4)
