import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epsheath.sheath import LayerContext, solve_phi0

settings.register_profile(
    "epsheath",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("epsheath")


@pytest.fixture(scope="session")
def canonical_ctx():
    """Ti = 1, u = -2, n0 = 1, boundary potential 0.1."""
    return LayerContext(1.0, -2.0, 1.0, 0.1)


@pytest.fixture(scope="session")
def canonical_profile(canonical_ctx):
    return solve_phi0(canonical_ctx, 40.0 / canonical_ctx.decay)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
