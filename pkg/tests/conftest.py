"""Shared fixtures: profile solves are expensive, so they are made once per session."""

import pytest

from fracseg.core import make_params
from fracseg.solver import SolverConfig, solve_profile
from fracseg.suite import ProfileCache

ACCEPTANCE_LINES: dict = {}


def record(result) -> None:
    """Remember a criterion outcome for the end-of-run summary."""
    ACCEPTANCE_LINES[result.number] = result.line()


@pytest.fixture(scope="session")
def profiles():
    """Reference, perturbed and long-domain solves, cached by ``(s, kind)``."""
    return ProfileCache("reference", seed=0)


@pytest.fixture(scope="session")
def coarse_solution():
    """A quick ``s = 1/2`` profile on the coarse grid."""
    return solve_profile(make_params(0.5), SolverConfig.at_resolution("coarse"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
