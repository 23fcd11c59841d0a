import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
