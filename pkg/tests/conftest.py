import numpy as np
import pytest


class ToyEnv:
    """Cheap deterministic environment: behavior is the first two genes mapped to [0, 1]^2."""

    genotype_length = 6
    behavior_dim = 2
    behavior_bounds = np.array([[0.0, 1.0], [0.0, 1.0]])
    goal = np.array([0.9, 0.9])
    goal_radius = 0.2

    def evaluate(self, genotypes):
        g = np.atleast_2d(genotypes)
        b = np.clip((np.tanh(g[:, :2] + 0.3 * g[:, 2:4]) + 1) / 2, 0, 1)
        return b, -np.linalg.norm(b - self.goal, axis=1)

    def describe(self):
        return {"kind": "toy"}


@pytest.fixture
def toy_env():
    return ToyEnv()


# one verdict line per acceptance criterion, printed after the test run
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
