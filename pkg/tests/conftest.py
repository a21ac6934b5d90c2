"""Shared pytest plumbing: the acceptance-criteria verdict block.

Tests marked `@pytest.mark.acceptance("<criterion>")` are tallied per
criterion label (several tests may share one label) and the terminal summary
ends with one PASS/FAIL line per criterion, so a suite run doubles as the
acceptance report.
"""

from __future__ import annotations

import pytest

_ORDER: list[str] = []
_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(label): end-to-end acceptance criterion; every test "
        "sharing the label must pass for the criterion to pass",
    )


def _slot(label: str) -> dict:
    if label not in _RESULTS:
        _ORDER.append(label)
        _RESULTS[label] = {"failed": False, "skipped": False, "ran": False,
                           "duration": 0.0}
    return _RESULTS[label]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    slot = _slot(marker.args[0])
    slot["duration"] += report.duration
    if report.skipped:
        slot["skipped"] = True
    elif report.when == "call" and report.passed:
        slot["ran"] = True
    elif report.failed:
        slot["failed"] = True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ORDER:
        return
    terminalreporter.section("acceptance criteria")
    for label in _ORDER:
        slot = _RESULTS[label]
        if slot["failed"]:
            verdict = "FAIL"
        elif slot["ran"]:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(
            f"{verdict:<5} [{slot['duration']:7.1f}s] {label}"
        )
