"""Collects the acceptance verdicts and prints them after the run."""

VERDICTS: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
