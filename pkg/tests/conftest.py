import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from triggerkit.operator_calculus import DecayEnvelope  # noqa: E402
from triggerkit.spectral_model import reference_model  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def model():
    return reference_model()


@pytest.fixture(scope="session")
def small_model():
    return reference_model(N=20)


@pytest.fixture(scope="session")
def env():
    return DecayEnvelope(1.0, 1.92)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
