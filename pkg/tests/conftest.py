import re

_AC = {}
_NAMES = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    _NAMES[k] = m.group(2).replace("_", " ")
    if report.when == "call" or report.outcome != "passed":
        prev = _AC.get(k, "PASS")
        _AC[k] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _AC:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_AC):
        tr.write_line(f"AC{k:<3} {_AC[k]}  {_NAMES[k]}")
