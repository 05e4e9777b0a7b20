import pytest
from hypothesis import HealthCheck, settings

from sixvertex.core import ModelParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ref():
    """Reference parameters (b1, b2) = (0.3, 0.6): q = 0.5, kappa = 1.75."""
    return ModelParams(0.3, 0.6)
