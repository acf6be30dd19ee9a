import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda text: int(text.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
