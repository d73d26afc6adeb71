import os

import pytest
from hypothesis import HealthCheck, settings

from perchsim.fixtures import data_dir

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def data():
    return data_dir()


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    path = tmp_path / "out"
    monkeypatch.setenv("PERCHSIM_OUT", str(path))
    return path
