import pytest


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion, bypassing capture."""

    def emit(name: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return emit
