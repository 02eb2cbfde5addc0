import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from incommensurate_dos.core_model import PotentialSpec  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("INCDOS_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="full-resolution profile; set INCDOS_FULL=1")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def model():
    return PotentialSpec()


@pytest.fixture(scope="session")
def free():
    return PotentialSpec.free()


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def verdict():
    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 13):
        status, detail = ACCEPTANCE.get(number, ("NOT RUN", "skipped or not collected"))
        terminalreporter.write_line(f"criterion {number:2d}: {status:7s} {detail}")
