"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest

_ACCEPTANCE = {}
_SETUP = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    num, label = marker.args
    if rep.when == "setup":
        # fixture solves run in setup; count them toward the criterion
        _SETUP[num] = rep.duration
    if rep.failed or rep.when == "call":
        prev = _ACCEPTANCE.get(num)
        if prev is None or prev[1]:
            dur = rep.duration + (_SETUP.get(num, 0.0) if rep.when == "call" else 0.0)
            _ACCEPTANCE[num] = (label, rep.passed, dur)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, label): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        label, ok, dur = _ACCEPTANCE[num]
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {label}  ({dur:.1f} s)")
