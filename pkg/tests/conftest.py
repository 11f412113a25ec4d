import pytest
from hypothesis import HealthCheck, settings

from pullback_lab.energy_diagnostics import compute_constants
from pullback_lab.wave_model import benchmark_spec

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def bench():
    return benchmark_spec()


@pytest.fixture(scope="session")
def ledger(bench):
    return compute_constants(bench)


@pytest.fixture(scope="session")
def small_spec():
    """Eight-mode benchmark, for tests that integrate many trajectories."""
    return benchmark_spec(n_modes=8)


@pytest.fixture(scope="session")
def small_ledger(small_spec):
    return compute_constants(small_spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
