import re

import pytest

# criterion number -> one-line measurement summary, filled by test_acceptance
ACCEPTANCE_DETAILS: dict[int, str] = {}
_NODE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


@pytest.fixture
def record_criterion():
    def _record(number: int, detail: str) -> None:
        ACCEPTANCE_DETAILS[number] = detail

    return _record


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _NODE.search(getattr(rep, "nodeid", ""))
            if m and (rep.when == "call" or key == "error"):
                outcomes[int(m.group(1))] = "PASS" if key == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        detail = ACCEPTANCE_DETAILS.get(n, "no measurement recorded")
        terminalreporter.write_line(f"criterion {n}: {outcomes[n]} | {detail}")
