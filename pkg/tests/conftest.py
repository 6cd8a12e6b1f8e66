import pytest

RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion k title: PASS|FAIL (time, limit) detail."""
    def record(k: int, title: str, ok: bool, seconds: float, limit: float | None,
               detail: str = "") -> str:
        budget = "" if limit is None else f", limit {limit:g}s"
        line = f"criterion {k} {title}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s{budget})"
        if detail:
            line += f" {detail}"
        RESULTS.append(line)
        print(line)
        return line
    return record


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
