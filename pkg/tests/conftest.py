import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Compiled-kernel warmup can blow per-example deadlines on first use.
settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
