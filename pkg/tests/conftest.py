import pytest

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): numbered acceptance criterion")
    config.addinivalue_line("markers", "slow: long-running acceptance check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    num, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _CRITERIA[num] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[num]
        line = f"criterion {num}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
