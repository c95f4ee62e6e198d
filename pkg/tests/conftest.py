import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Record an acceptance verdict: record(id, passed, detail)."""
    def _rec(cid, passed, detail):
        ACCEPTANCE[cid] = (bool(passed), detail)
        print(f"[{cid}] {'PASS' if passed else 'FAIL'}: {detail}")
    return _rec


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid:>4} {'PASS' if ok else 'FAIL'}  {detail}")
