import numpy as np
import pytest

from plugpull import config as cfg
from plugpull import dynamics as dyn
from plugpull import hybrid as hy

from .helpers import random_states  # noqa: F401


@pytest.fixture(scope="session")
def params():
    return dyn.ArmParams()


@pytest.fixture(scope="session")
def replication_config():
    return cfg.load_config("replication", environ={})


@pytest.fixture(scope="session")
def replication_scenario(replication_config):
    return cfg.build_scenario(replication_config)


@pytest.fixture(scope="session")
def default_run(replication_scenario):
    """The full replication run, shared by several modules."""
    return hy.simulate(replication_scenario)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, when that module ran."""
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(mod.RESULTS, key=lambda k: int(k[2:])):
        terminalreporter.write_line(mod.RESULTS[tag])
