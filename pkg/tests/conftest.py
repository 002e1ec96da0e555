import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """``criterion(code, ok, detail)`` records one part of an acceptance criterion."""
    table = request.config.stash[_RESULTS]

    def record(code: str, ok: bool, detail: str):
        table.setdefault(code, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_RESULTS, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(table, key=lambda c: int(c[1:])):
        parts = table[code]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{status} {code}: " + "; ".join(d for _, d in parts))
