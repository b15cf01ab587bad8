import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA: dict[int, str] = {}
_ACCEPTANCE_COUNT = 11
_acceptance_collected = False


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary prints all of them after the run."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_collection_modifyitems(config, items):
    global _acceptance_collected
    _acceptance_collected = any(item.module.__name__.endswith("test_acceptance") for item in items)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not (_CRITERIA or _acceptance_collected):
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, _ACCEPTANCE_COUNT + 1):
        terminalreporter.write_line(_CRITERIA.get(n, f"criterion {n:2d}: FAIL  (not run or aborted before a result)"))
