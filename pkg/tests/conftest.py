import numpy as np
import pytest

from mgstab.model import build_simplified_model, table1

M_BASE = 2.5e-3
N_BASE = 5e-3

# filled by test_acceptance.report, printed once at the end of the session
ACCEPTANCE_LINES = []


def table1_model(scale=1.0, **kw):
    return build_simplified_model(table1(m_base=M_BASE * scale, n_base=N_BASE, **kw))


@pytest.fixture(scope="session")
def stable_model():
    return table1_model(1.0)


@pytest.fixture(scope="session")
def stable_eq(stable_model):
    from mgstab.equilibrium import solve_equilibrium
    return solve_equilibrium(stable_model)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
