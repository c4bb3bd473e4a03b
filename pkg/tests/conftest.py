import pytest

from fowtlab import default_parameters, default_surfaces


@pytest.fixture(scope="session")
def p():
    return default_parameters()


@pytest.fixture(scope="session")
def surfaces():
    return default_surfaces()


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """``record(criterion, part, ok, detail)`` collects acceptance outcomes."""
    results = request.config.stash[_ACCEPTANCE]

    def record(criterion: int, part: str, ok: bool, detail: str) -> bool:
        results.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        parts = results[criterion]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}{'' if ok else ' [FAIL]'}: {text}" for part, ok, text in parts)
        terminalreporter.write_line(f"criterion {criterion:>2}: {status}  {detail}")
