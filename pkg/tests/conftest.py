import functools

import pytest

from stk.builtins import SPACE_CATALOG
from stk.network import universal_lift


@functools.lru_cache(maxsize=None)
def lift_of(name):
    """Verified universal lift of a catalog map, shared across tests."""
    return universal_lift(SPACE_CATALOG[name]())


@pytest.fixture(autouse=True)
def _cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("STK_CACHE_DIR", str(tmp_path / "cache"))


_VERDICTS = pytest.StashKey()


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    table = request.config.stash.setdefault(_VERDICTS, {})

    def record(criterion, ok, detail=""):
        table[criterion] = (bool(ok), detail)
        assert ok, f"criterion {criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_VERDICTS, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(table, key=lambda c: (int(c.split()[0]), c)):
        ok, detail = table[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
