import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hetofdma import channel
from hetofdma.model import SystemConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_instance(rng, N=None, K=None, K1=None, snr=None, rdc_per_user=None):
    """Random small instance on the Rayleigh model (N >= 8) or i.i.d. CNRs (N < 8)."""
    N = N or int(rng.integers(3, 7))
    K = K or int(rng.integers(2, 5))
    K1 = int(rng.integers(0, min(2, K - 1) + 1)) if K1 is None else K1
    P_T = 10 ** ((rng.uniform(5, 20) if snr is None else snr) / 10)
    alpha = N * rng.exponential(size=(K, N)) / channel.DEFAULT_GAP + 1e-3
    r = rng.uniform(0.5, 3.0, size=K1) * N / 4 if rdc_per_user is None else [rdc_per_user] * K1
    return SystemConfig(K=K, K1=K1, N=N, P_T=P_T, R=tuple(float(x) for x in r)), alpha


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
