import sys
from pathlib import Path

import pytest
from hypothesis import settings

from gkappa import example_path, load_example

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None)
settings.load_profile("default")

GOLDEN = Path(__file__).parent / "golden"

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def golden():
    return GOLDEN


@pytest.fixture
def model():
    return load_example


@pytest.fixture
def model_path():
    return lambda name: str(example_path(name))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
