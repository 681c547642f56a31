import pytest

from fractalcomp import NetworkConfig, PathLossLaw

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    """Log one acceptance verdict; the lines are echoed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config():
    return NetworkConfig()


@pytest.fixture(scope="session")
def law():
    return PathLossLaw()
