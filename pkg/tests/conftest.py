import numpy as np
import pytest

from fedlf.model import ModelArch, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    return ModelArch(input_dim=5, feature_dim=4, num_classes=3, hidden_widths=(6,), activation="tanh")


@pytest.fixture
def tiny_params(tiny_arch):
    return init_params(tiny_arch, 7)


# one "PASS/FAIL <criterion>" line per acceptance criterion, printed at the end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
