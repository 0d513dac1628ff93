"""Prints the acceptance report collected by ``test_acceptance.py``."""

REPORT = []


def pytest_terminal_summary(terminalreporter):
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
