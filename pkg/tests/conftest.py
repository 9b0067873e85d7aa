import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vmac.rates import ChannelState

settings.register_profile(
    "vmac", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("vmac")


def random_state(rng, L, U, span_db=30.0, complex_=True):
    H = rng.standard_normal((L, U))
    if complex_:
        H = (H + 1j * rng.standard_normal((L, U))) / np.sqrt(2)
    P = 10 ** (rng.uniform(0, span_db, U) / 10)
    s2 = 10 ** rng.uniform(-0.5, 0.5, L)
    return ChannelState(H, P, s2)


@pytest.fixture
def scalar_state():
    return ChannelState([[1.0]], [1.0], [1.0])


def det_cofactor(A):
    """Determinant by Laplace expansion along the first row (oracle, small n)."""
    A = [list(r) for r in A]
    n = len(A)
    if n == 1:
        return A[0][0]
    total = 0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in A[1:]]
        total += (-1) ** j * A[0][j] * det_cofactor(minor)
    return total


# acceptance criterion -> list of (label, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{label}: {'ok' if p else 'FAIL'} ({d})" for label, p, d in parts)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
