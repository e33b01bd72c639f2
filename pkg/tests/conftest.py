import numpy as np
import pytest

from conelab.manifold import build_model

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid5():
    return build_model("grid", d=2, side=5)


@pytest.fixture(scope="session")
def path2():
    return build_model("grid", d=1, side=2)


@pytest.fixture(scope="session")
def path3():
    return build_model("grid", d=1, side=3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
