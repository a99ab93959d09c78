import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# one summary line per acceptance criterion (tests named test_cNN_...)
_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_c"):
        return
    key = "C" + str(int(name[6:8]))
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.failed:
        outcome = "PASS" if report.passed else "FAIL"
        if key not in _criteria or outcome == "FAIL":
            _criteria[key] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k[1:])):
        outcome, detail = _criteria[key]
        terminalreporter.write_line(f"{key:<4}{outcome}  {detail}")
