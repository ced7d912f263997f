import time

import numpy as np
import pytest

import tracermix as tm
from tracermix.datasets import grouped_demo, simple_demo


@pytest.fixture(scope="session")
def simple_data():
    return simple_demo()


@pytest.fixture(scope="session")
def grouped_data():
    return grouped_demo()


@pytest.fixture(scope="session")
def two_source_data():
    """K=2, J=1 problem with tight sources; matched by the grid oracle."""
    rng = np.random.default_rng(2024)
    mu_s = np.array([-5.0, 5.0])
    sd_s = np.array([0.5, 0.5])
    p1, sigma = 0.3, 0.4
    mean = p1 * mu_s[0] + (1 - p1) * mu_s[1]
    sd = np.sqrt(p1 ** 2 * sd_s[0] ** 2 + (1 - p1) ** 2 * sd_s[1] ** 2 + sigma ** 2)
    y = mean + sd * rng.standard_normal(15)
    return tm.MixingData(
        mixtures=y[:, None],
        tracer_names=["t1"],
        source_names=["S1", "S2"],
        source_means=mu_s[:, None],
        source_sds=sd_s[:, None],
    )


@pytest.fixture(scope="session")
def mcmc_simple(simple_data):
    """Default-control MCMC fit of the simple demo, with its wall time."""
    t0 = time.perf_counter()
    result = tm.run_mcmc(simple_data)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ffvb_simple(simple_data):
    t0 = time.perf_counter()
    result = tm.run_ffvb(simple_data)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def quick_control():
    """Short MCMC control for tests that need draws, not precision."""
    return tm.McmcControl(n_chains=2, iterations=1500, burn_in=500, thin=5, seed=11)


@pytest.fixture(scope="session")
def mcmc_grouped(grouped_data):
    control = tm.McmcControl(n_chains=2, iterations=2000, burn_in=500, thin=5, seed=5)
    return tm.run_mcmc(grouped_data, control=control)
