import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if not acceptance_report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance_report.RESULTS):
        terminalreporter.write_line(acceptance_report.format_line(number))
