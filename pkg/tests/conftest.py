import os
import time

import pytest

from volcp.cli import DEFAULT_SEED
from volcp.mc import run_table_experiment
from volcp.simulate import table_scenario

WORKERS = os.cpu_count() or 1

ACCEPTANCE_LINES = []


def pytest_collection_modifyitems(config, items):
    if os.environ.get("VOLCP_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set VOLCP_FULL=1")
    for item in items:
        if "optional" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model1_n1000():
    """(summary, seconds) for model1, n=1000, M=1000 at the default seed."""
    start = time.perf_counter()
    summary = run_table_experiment(table_scenario(1, 1000), M=1000, seed=DEFAULT_SEED, workers=WORKERS)
    return summary, time.perf_counter() - start


@pytest.fixture(scope="session")
def model1_n5000():
    return run_table_experiment(table_scenario(1, 5000), M=500, seed=DEFAULT_SEED, workers=WORKERS)
