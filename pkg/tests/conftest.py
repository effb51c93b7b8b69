import os

import pytest
from hypothesis import HealthCheck, settings

from vapbench.workloads.scenario import default_workload

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# Campaign tests spawn no workers unless asked to.
os.environ.setdefault("VAPBENCH_THREADS", "1")


@pytest.fixture(scope="session")
def av():
    return default_workload("av")


@pytest.fixture(scope="session")
def drone():
    return default_workload("drone")


@pytest.fixture(scope="session")
def av_stop():
    return default_workload("av", "av_stop")
