import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, results) -> bool:
        ok = all(r.passed for r in results)
        detail = "; ".join(f"{r.name}: measured={r.measured:.6g} expected {r.expected} (tol {r.tolerance})"
                           for r in results)
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
