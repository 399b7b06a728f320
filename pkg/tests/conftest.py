import re

import pytest

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.name.startswith("test_criterion_"):
        if rep.when == "call":
            _ACCEPTANCE[item.name] = rep.passed
        elif rep.when == "setup" and not rep.passed:
            _ACCEPTANCE[item.name] = False


def _criterion_order(name):
    m = re.match(r"test_criterion_(\d+)", name)
    return (int(m.group(1)) if m else 99, name)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=_criterion_order):
        status = "PASS" if _ACCEPTANCE[name] else "FAIL"
        terminalreporter.write_line(f"{status} {name}")
