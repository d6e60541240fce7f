import re
import warnings

import pytest
from hypothesis import HealthCheck, settings

from relprop import bundled_dataset
from relprop.relstore import load_database

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TRAINS_TARGET = ("trains", "direction")
TOY_TARGET = ("TRAIN", "eastbound")


@pytest.fixture(autouse=True)
def _quiet_fold_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="k=.*exceeds the smallest class size")
        yield


@pytest.fixture
def toy_path():
    return str(bundled_dataset("toy_trains"))


@pytest.fixture
def toy_db(toy_path):
    return load_database(toy_path, *TOY_TARGET)


@pytest.fixture
def trains_path():
    return str(bundled_dataset("trains_synthetic"))


@pytest.fixture
def trains_db(trains_path):
    return load_database(trains_path, *TRAINS_TARGET)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: list[tuple[int, str]] = []


@pytest.fixture
def criterion():
    """Records a one-line PASS/FAIL verdict for an acceptance criterion.

    ``criterion(3, "AUC oracle", passed, detail)`` stores the verdict for the
    terminal summary and fails the test when ``passed`` is false.
    """

    def record(number, title, passed, detail=""):
        ACCEPTANCE.append((number, f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})"))
        assert passed, f"criterion {number} failed: {detail}"

    return record


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if m and report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        reason = reason.removeprefix("Skipped: ")
        ACCEPTANCE.append((int(m[1]), f"[SKIP] criterion {int(m[1]):>2}: {m[2]} ({reason})"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
