import numpy as np
import pytest

from smcopt.problems import toy_library


@pytest.fixture(scope="session")
def toys():
    return toy_library()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
