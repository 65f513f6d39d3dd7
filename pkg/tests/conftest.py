import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = {}
ACCEPTANCE_TITLES = {
    1: "equivalence suite",
    2: "tightness oracle",
    3: "relaxed-condition convergence (CP on LASSO)",
    4: "sufficiency sweep with Lyapunov descent",
    5: "condition tables",
    6: "closed-form optima",
    7: "directional speedup",
    8: "prox/oracle property suite",
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """``acceptance(k, ok, detail)`` records the outcome of criterion ``k``."""

    def record(k, ok, detail=""):
        _ACCEPTANCE.setdefault(k, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    ran = [k for k in ACCEPTANCE_TITLES if k in _ACCEPTANCE]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for k in ACCEPTANCE_TITLES:
        entries = _ACCEPTANCE.get(k)
        if entries is None:
            status, detail = "FAIL", "not recorded (test errored or was deselected)"
        else:
            status = "PASS" if all(ok for ok, _ in entries) else "FAIL"
            detail = "; ".join(d for _, d in entries if d)
        terminalreporter.write_line(f"[{status}] {k}. {ACCEPTANCE_TITLES[k]}: {detail}")
