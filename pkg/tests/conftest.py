import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vicalib.core import RigidMotion

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_motion(rng, max_angle=np.pi, max_trans=2.0):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return RigidMotion.from_rotvec(axis * rng.uniform(0, max_angle), rng.uniform(-max_trans, max_trans, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
