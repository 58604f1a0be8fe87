import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_system(n=4, m=6, seed=0, radius=0.9):
    """Random stable (A, B) with spectral radius ``radius``."""
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, n))
    a *= radius / max(abs(np.linalg.eigvals(a)))
    b = r.standard_normal((n, m))
    return a, b


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one verdict line per acceptance criterion."""
    def record(number, name, passed, seconds, limit, detail=""):
        ok = passed and seconds < limit
        line = (f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} "
                f"({seconds:.2f} s, limit {limit:g} s){' | ' + detail if detail else ''}")
        ACCEPTANCE_LINES.append(line)
        return ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
