import numpy as np
import pytest

from evload.grid import load_case


@pytest.fixture(scope="session")
def case():
    return load_case()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        ok = all(p for _, p, _ in checks)
        parts = "; ".join(f"{name} {'ok' if p else 'FAILED'}: {d}" for name, p, d in checks)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({parts})")
