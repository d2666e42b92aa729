"""Shared pytest wiring.

The acceptance tests append one scoreboard line each; echoing them in
the terminal summary keeps the verdicts visible even when pytest
captures stdout.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
