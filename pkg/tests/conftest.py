"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest

from adml.simulation import DgpSpec, sample_dgp

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[str]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)


@pytest.fixture(scope="session")
def small_data():
    """One moderate dataset from the default design, shared read-only."""
    return sample_dgp(DgpSpec(gamma=0.5), 150, seed=11)


def gridded_covariates(
    rng: np.random.Generator, n: int, d: int
) -> np.ndarray:
    """Covariates balanced over five levels so quantile knots include the
    sample minimum, putting linear functions in the hinge span exactly."""
    levels = np.array([-0.8, -0.4, 0.0, 0.4, 0.8])
    if n % levels.size:
        raise ValueError("n must be a multiple of 5")
    cols = [rng.permutation(np.tile(levels, n // levels.size)) for _ in range(d)]
    return np.column_stack(cols)
