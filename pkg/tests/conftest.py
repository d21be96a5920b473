import numpy as np
import pytest

from cosparse_admm.frame import TightFrame, build_identity_frame
from cosparse_admm.problem import ProblemInstance, generate_instance

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scalar_instance(y: float = 10.0, alpha: float = 1.0) -> ProblemInstance:
    return ProblemInstance(M=[[1.0]], y=[y], frame=build_identity_frame(1), alpha=alpha)


def standard_instance(seed: int = 3, alpha: float = 100.0) -> ProblemInstance:
    return generate_instance(8, 6, 2, 12, alpha, 0.0, seed, basis="signed_permutation")


@pytest.fixture
def scalar():
    return scalar_instance()


@pytest.fixture
def standard():
    return standard_instance()


@pytest.fixture
def zero_instance():
    gen = np.random.default_rng(0)
    frame = TightFrame.from_matrix(np.eye(4))
    return ProblemInstance(M=gen.standard_normal((3, 4)), y=np.zeros(3), frame=frame, alpha=2.0)
