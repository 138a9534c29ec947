import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fringephase.geometry import default_rig
from fringephase.pipeline import capture_scene, default_scenes, sphere_scene
from fringephase.simulator import NoiseSpec
from fringephase.surfaces import surface_from_dict

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def small_rig():
    return default_rig(camera_scale=0.25)


@pytest.fixture(scope="session")
def sphere_capture(rig):
    return capture_scene(rig, sphere_scene(), NoiseSpec())


@pytest.fixture(scope="session")
def five_scenes(rig):
    """Plane, sphere and three height fields, noiseless and unquantized."""
    return {s["id"]: capture_scene(rig, surface_from_dict(s["surface"]), NoiseSpec())
            for s in default_scenes(3)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
