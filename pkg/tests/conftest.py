import warnings

import numpy as np
import pytest
from hypothesis import settings

from mixid.errors import NumericalUnderflow

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _quiet_underflow():
    # far-off grid cells legitimately floor their densities
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalUnderflow)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
