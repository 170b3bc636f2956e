import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from archrep.innovations import standard_normal

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def normal():
    return standard_normal()


def naive_w(res, phi, xs):
    """Direct double loop for W_n; oracle for the sorted-cumsum kernel."""
    n = res.size
    out = np.zeros((phi.shape[1], xs.size))
    for i, x in enumerate(xs):
        G = sum(1.0 for r in res if r <= x) / n
        for k in range(phi.shape[1]):
            out[k, i] = sum(phi[t, k] * ((1.0 if res[t] <= x else 0.0) - G) for t in range(n))
    return out / np.sqrt(n)


# criterion number -> PASS/FAIL line, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
