import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dcem.psychro import WeatherSeries
from dcem.reference import synthetic_weather

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def weather():
    return synthetic_weather("fixture", seed=11)


@pytest.fixture(scope="session")
def hot_weather():
    return synthetic_weather("hot", mean_c=26.0, annual_amp=4.0, rh_mean=0.7, seed=12)


def constant_weather(dry_bulb, rh=0.5, n=8760):
    return WeatherSeries("const", np.full(n, float(dry_bulb)), np.full(n, float(rh)))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
