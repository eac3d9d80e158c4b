import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from horizon_ii.feedform import FeedbackFormSystem

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WORKED_F1 = "-x1 + lambda*x1^3*x2"
WORKED_BETA = "-(k - 4)/2*x1^2 - k/2*x2 - 2*lambda*x1^4*x2"


def worked_example(lam=1.0, k=2.0, beta=WORKED_BETA):
    return FeedbackFormSystem(1, [WORKED_F1], "-x1^2", beta, k, {"lambda": lam, "k": k})


@pytest.fixture
def ffs():
    return worked_example()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
