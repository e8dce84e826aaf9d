"""Shared fixtures: a collector that echoes acceptance verdicts at the end.

The acceptance tests record one line each; the terminal-summary hook prints
them after the usual pytest tally so the verdicts survive output capture.
"""

_verdicts = []


def record_verdict(line):
    _verdicts.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_verdicts):
        terminalreporter.write_line(line)
