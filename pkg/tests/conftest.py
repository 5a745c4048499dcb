import re

VERDICTS = {}


def record(number, passed, detail):
    """Register the outcome of acceptance criterion ``number`` and print it."""
    number = str(number)
    line = f"criterion {number:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS, key=lambda s: (int(re.match(r"\d+", s).group()), s)):
        terminalreporter.write_line(VERDICTS[number])
