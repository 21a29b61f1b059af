"""Shared test plumbing.

Acceptance tests register one summary line apiece; the lines are echoed
after the run so the verdict for each criterion is visible even with
output capture enabled.
"""

_acceptance_lines: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    _acceptance_lines.append(f"[{verdict}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
