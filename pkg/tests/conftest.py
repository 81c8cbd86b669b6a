import math

import pytest

from jumpmet import ModelSpec, default_initial_state

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.append((marker.args[0], marker.args[1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, outcome in sorted(_criteria, key=lambda c: (int(str(c[0]).rstrip("abc")), str(c[0]))):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {text}")


@pytest.fixture
def flip():
    return ModelSpec("commuting-flip", 0.7)


@pytest.fixture
def reset_spec():
    return ModelSpec("reset", 0.6, {"A": 0.9, "b": 0.1})


@pytest.fixture
def reset_rho(reset_spec):
    return default_initial_state(reset_spec)


NEAR_COMPLETE = {"reset_amplitude": 1e-4, "b": 0.1}
PHI_NEAR_PI = 499 * math.pi / 500
