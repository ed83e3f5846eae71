import pytest

from robust_stirep.seeds import TABULATED
from robust_stirep.solver import solve_extremum
from robust_stirep.synthesis import reference_cos_sin, synthesize

_CRITERIA = []


@pytest.fixture(scope="session")
def solutions():
    """Converged solutions for the four tabulated slopes, keyed by phidot_i."""
    return {p: solve_extremum(p, seed, seed.crossing_index) for p, seed in TABULATED.items()}


@pytest.fixture(scope="session")
def robust_pulses(solutions):
    return {p: synthesize(sol, 1.0, 4097) for p, sol in solutions.items()}


@pytest.fixture(scope="session")
def reference_pulses():
    return reference_cos_sin(1.0, 4097)


@pytest.fixture(scope="session")
def family(solutions):
    """Optimal family on 33 uniform points of [0, 16]."""
    from robust_stirep.solver import parse_grid, sweep_family

    return sweep_family(parse_grid("0:16:33"), solutions[0.0])


@pytest.fixture
def criterion():
    """Record one summary line per acceptance criterion."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
