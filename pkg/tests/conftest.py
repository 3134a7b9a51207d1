import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "frpopt",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("frpopt")

# acceptance criterion -> list of (check, passed, detail)
_ACCEPTANCE: dict[str, list] = {}


def record_acceptance(criterion: str, check: str, passed: bool, detail: str) -> None:
    line = f"{criterion} {'PASS' if passed else 'FAIL'} [{check}] {detail}"
    print(line)
    _ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[crit]
        ok = all(p for _, p, _ in checks)
        terminalreporter.write_line(f"{crit}: {'PASS' if ok else 'FAIL'}")
        for check, passed, detail in checks:
            terminalreporter.write_line(f"    {'pass' if passed else 'FAIL'}  {check}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
