import pytest

from mrsrepro.signals import SpectrometerContext, default_mm_model, generate_basis

# Acceptance outcomes collected by tests/test_acceptance.py, printed at session end.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ctx():
    return SpectrometerContext()


@pytest.fixture(scope="session")
def basis(ctx):
    return generate_basis(ctx)


@pytest.fixture(scope="session")
def mm(ctx):
    return default_mm_model(ctx)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
