import datetime as dt

import numpy as np
import pytest

from ehe import synthetic as syn
from ehe.mcmc import SamplerConfig, fit


@pytest.fixture(scope="session")
def stations4():
    return syn.default_stations(4)


@pytest.fixture(scope="session")
def truth4(stations4):
    return syn.truth_state(stations4, 3)


@pytest.fixture(scope="session")
def small_data(stations4, truth4):
    """Four synthetic stations, three years, a few missing days."""
    data, series = syn.simulate_dataset(truth4, stations4, 34.0, dt.date(1953, 1, 1),
                                        n_years=3, seed=5, missing_rate=0.01)
    return data, series


@pytest.fixture(scope="session")
def short_chain(small_data):
    data, _ = small_data
    return fit(data, sconfig=SamplerConfig(iterations=40, seed=2))


@pytest.fixture(scope="session")
def short_baseline_chain(small_data):
    data, _ = small_data
    return fit(data, sconfig=SamplerConfig(iterations=40, seed=2), kind="single_state")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
