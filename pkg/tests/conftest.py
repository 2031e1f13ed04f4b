import pytest

# criterion id -> list of (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(cid: str, passed: bool, detail: str):
        ACCEPTANCE.setdefault(cid, []).append((bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (len(c), c)):
        checks = ACCEPTANCE[cid]
        ok = all(p for p, _ in checks)
        tr.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  " + "; ".join(d for _, d in checks))
