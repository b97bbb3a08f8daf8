import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.stash[_VERDICTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    n = mark.args[0]
    verdicts = item.config.stash[_VERDICTS]
    ok, notes = verdicts.get(n, (True, []))
    notes = notes + [v for k, v in report.user_properties if k == "detail"]
    verdicts[n] = (ok and report.passed, notes)


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash[_VERDICTS]
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        ok, notes = verdicts[n]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}"
        if notes:
            line += "  " + "; ".join(dict.fromkeys(notes))
        terminalreporter.write_line(line)
