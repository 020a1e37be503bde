import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spotvol.experiments import ExperimentSpec, run_table1

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []

TABLE1_NH = (10, 15, 25, 39, 78, 234)
TABLE1_SEED = 11


def ks_critical(m, n, alpha=0.01):
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    return np.sqrt(-0.5 * np.log(alpha / 2)) * np.sqrt((m + n) / (m * n))


@pytest.fixture(scope="session")
def table1_rows():
    """Psi slopes at full size (20,000 pairs per grid point)."""
    spec = ExperimentSpec(scenario="table1", nh=TABLE1_NH, seed=TABLE1_SEED)
    return run_table1(spec, write=False)


@pytest.fixture(scope="session")
def table1_slopes(table1_rows):
    return {row[0]: row[3] for row in table1_rows}


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
