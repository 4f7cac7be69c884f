from __future__ import annotations

import pytest

_VERDICTS: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    ok = rep.passed
    if rep.when == "setup" and ok:
        return
    prev = _VERDICTS.get(number)
    _VERDICTS[number] = (title, ok if prev is None else prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, ok = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {title}: {'PASS' if ok else 'FAIL'}")
