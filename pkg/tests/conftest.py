import numpy as np
import pytest

try:
    from threadpoolctl import threadpool_limits
    # thread synchronization costs more than it saves at these sizes
    _LIMITS = threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    pass


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
