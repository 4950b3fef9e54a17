import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nmcontrol import build_operators, reference_model

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def ref_ops():
    """Reference single-TLS operators."""
    return build_operators(reference_model())


@pytest.fixture(scope="session")
def two_tls_ops():
    return build_operators(reference_model(extra_tls=[(1000.0, 40.0, 200.0)]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
