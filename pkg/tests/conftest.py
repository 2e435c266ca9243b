import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record ``criterion(n, ok, detail)`` for the end-of-run acceptance table, then assert."""
    table = request.config.stash[_CRITERIA_KEY]

    def record(number: int, ok: bool, detail: str):
        table.setdefault(number, []).append((bool(ok), detail))
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_CRITERIA_KEY, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        entries = table[number]
        ok = all(e[0] for e in entries)
        detail = "; ".join(e[1] for e in entries)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
