import pytest

from _worlds import build_corpus

# criterion number -> (title, passed, detail), filled by test_acceptance
CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def corpus():
    return build_corpus()


@pytest.fixture
def criterion():
    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        CRITERIA[number] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, ok, detail = CRITERIA[n]
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))
