import numpy as np
import pytest

from furst import kernels

BACKENDS = ["python"] + (["compiled"] if kernels.COMPILED_AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the decorated test under each available kernel backend."""
    with kernels.use(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
