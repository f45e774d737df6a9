import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gopsa.backend import available_backends

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_spd(rng, d, cond=10.0):
    """SPD matrix with eigenvalues spread log-uniformly over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.exp(rng.uniform(0, np.log(cond), d))
    return (Q * w) @ Q.T


def random_sym(rng, d, scale=1.0):
    X = rng.standard_normal((d, d)) * scale
    return (X + X.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=available_backends())
def backend_name(request):
    return request.param


#: (criterion, passed, detail) rows filled by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
