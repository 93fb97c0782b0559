import pytest

from coevolve.llm import Gateway, ScriptedProvider
from coevolve.sandbox import ExecLimits, Executor


@pytest.fixture
def executor():
    return Executor(ExecLimits(wall_timeout_ms=2000), workers=2)


@pytest.fixture
def scripted():
    """Build a gateway over a script with instant retries."""

    def make(entries, **kwargs):
        return Gateway(ScriptedProvider(entries), base_delay=0, **kwargs)

    return make


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in rep.nodeid and rep.when == "call":
                name = rep.nodeid.split("::")[-1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")
