import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from implicit_rcis.cli import build, preset_config
from implicit_rcis.oracle import maximal_rcis

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="also run long checks (n = 10 integrator, pruned n = 4 build)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _build(name, prune=True):
    cfg = preset_config(name)
    cfg.pipeline["prune"] = prune
    return build(cfg)


@pytest.fixture(scope="session")
def n2():
    """Integrator n = 2, tree L = 4, pruned."""
    return _build("integrator:2")


@pytest.fixture(scope="session")
def n2_oracle(n2):
    return maximal_rcis(n2.plant)


@pytest.fixture(scope="session")
def n4():
    """Integrator n = 4, tree L = 4; unpruned rows describe the same set."""
    return _build("integrator:4", prune=False)


@pytest.fixture(scope="session")
def n4_oracle(n4):
    return maximal_rcis(n4.plant)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
