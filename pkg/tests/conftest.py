import pytest
from hypothesis import HealthCheck, settings

# single-core CI boxes make wall-clock deadlines flaky
settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion."""
    def log(number, ok: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        print(line)
        _LINES.append(line)
        return ok
    return log


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
