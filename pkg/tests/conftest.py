import numpy as np
import pytest

from ncerg import TracialAlgebra


@pytest.fixture
def alg():
    """Two 2x2 blocks with heterogeneous weights (total dimension 4)."""
    return TracialAlgebra((2, 2), (1.0, 0.5))


@pytest.fixture
def alg6():
    return TracialAlgebra((2, 4), (1.0, 0.5))


@pytest.fixture
def alg_single():
    return TracialAlgebra((4,), (1.0,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
