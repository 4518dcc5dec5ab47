import pytest

# criterion number -> (title, measured detail); filled by the acceptance tests
ACCEPTANCE_DETAILS: dict[int, str] = {}
_OUTCOMES: dict[int, tuple[str, str]] = {}


def _criterion_of(item) -> tuple[int, str] | None:
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return None
    return marker.args[0], marker.args[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    info = _criterion_of(item)
    if info is None:
        return
    number, title = info
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, verdict = _OUTCOMES[number]
        detail = ACCEPTANCE_DETAILS.get(number, "")
        terminalreporter.write_line(f"{verdict} criterion {number:2d}: {title}" + (f" | {detail}" if detail else ""))
