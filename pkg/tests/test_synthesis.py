import math

import numpy as np
import pytest

from robust_stirep.errors import GridMismatch
from robust_stirep.io import read_csv
from robust_stirep.synthesis import (
    ANGLE_COLUMNS,
    PULSE_COLUMNS,
    PulseSet,
    angles_to_csv,
    loss_estimate,
    metrics,
    pulses_to_csv,
    reference_cos_sin,
    threshold_duration,
    time_parametrize,
)


def test_largest_area_extremum_timing(solutions):
    sol = solutions[0.0]
    ang = time_parametrize(sol, 1.0, 2049)
    assert ang.eta[-1] / math.pi == pytest.approx(2.9225, abs=1e-4)
    assert sol.area / math.pi == pytest.approx(5.7498, abs=1e-4)


@pytest.mark.parametrize("phidot_i", [0.0, 0.4, 16.0, 250.0])
def test_midpoint_is_equal_superposition(solutions, phidot_i):
    sol = solutions[phidot_i]
    ang = time_parametrize(sol, 1.0, 2049)
    mid = 1024
    assert ang.theta[mid] == pytest.approx(math.pi / 4, abs=1e-6)
    assert abs(ang.phi_dot[mid]) < 1e-6 * sol.area
    assert ang.theta[-1] == pytest.approx(math.pi / 2, abs=1e-9)


def test_initial_eta_rate_for_steep_start(solutions):
    sol = solutions[250.0]
    ang = time_parametrize(sol, 1.0, 101)
    assert ang.eta_dot[0] == pytest.approx(sol.area / (2 * math.hypot(250.0, 1.0)), rel=1e-9)


def test_parametrizations_agree(solutions):
    sol = solutions[16.0]
    a = time_parametrize(sol, 2.0, 513)
    b = time_parametrize(sol, 2.0, 513, method="ode")
    for name in ("phi", "eta", "theta", "phi_dot", "eta_dot"):
        assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-8), name


def test_zero_slope_pulses_are_counter_intuitive(robust_pulses):
    p = robust_pulses[0.0]
    assert abs(p.omega_p[0]) < 1e-12 * p.Omega
    assert abs(p.omega_s[0]) == pytest.approx(p.Omega, rel=1e-12)


def test_steep_start_mixes_orderings(robust_pulses):
    p = robust_pulses[250.0]
    d = np.abs(p.omega_p) - np.abs(p.omega_s)
    flips = p.t_grid[np.flatnonzero(np.diff(np.sign(d)))]
    assert d[0] > 0 and d[-1] < 0
    assert len(flips) == 3 and flips[0] < 0.2 and flips[-1] > 0.8


@pytest.mark.parametrize("phidot_i", [0.0, 0.4, 16.0, 250.0])
def test_constant_generalized_rabi_frequency(solutions, robust_pulses, phidot_i):
    p = robust_pulses[phidot_i]
    assert np.max(np.abs(p.amplitude - solutions[phidot_i].area)) < 1e-8 * p.Omega


def test_reference_metrics(reference_pulses):
    area, energy, a2 = metrics(reference_pulses)
    assert area / math.pi == pytest.approx(math.sqrt(3), abs=1e-12)
    assert energy == pytest.approx(3.0, abs=1e-12)
    assert a2 == pytest.approx(0.375, abs=1e-6)


@pytest.mark.parametrize(
    "phidot_i, expected",
    [(250.0, (3.4603, 11.9739, 0.1291)), (0.0, (5.7498, 33.0599, 0.0371))],
)
def test_robust_metrics(solutions, robust_pulses, phidot_i, expected):
    ang = time_parametrize(solutions[phidot_i], 1.0, 4097)
    area, energy, a2 = metrics(robust_pulses[phidot_i], ang)
    assert (area / math.pi, energy, a2) == pytest.approx(expected, rel=2e-3)


def test_null_pulses():
    t = np.linspace(0, 1, 11)
    null = PulseSet(t, np.zeros(11), np.zeros(11), 1.0, 0.0, "null")
    assert metrics(null) == (0.0, 0.0, 0.0)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        PulseSet(np.linspace(0, 1, 5), np.zeros(4), np.zeros(5), 1.0, 0.0, "bad")


def test_angles_on_other_grid_rejected(solutions, robust_pulses):
    with pytest.raises(GridMismatch):
        metrics(robust_pulses[16.0], time_parametrize(solutions[16.0], 1.0, 100))


def test_time_reversal_and_scaling(reference_pulses):
    rev = reference_pulses.time_reversed()
    assert np.allclose(rev.fields(np.array([0.25]))[0], reference_pulses.fields(np.array([0.75]))[0])
    big = reference_pulses.scaled(1.1)
    assert big.Omega == pytest.approx(1.1 * reference_pulses.Omega)


@pytest.mark.parametrize("a2, T", [(0.1291, 7.7e-4), (0.0371, 27.0e-4)])
def test_loss_threshold_examples(a2, T):
    assert loss_estimate(a2, T, 1.0).p_loss == pytest.approx(1e-4, rel=0.01)
    assert threshold_duration(a2) == pytest.approx(T, rel=0.01)


def test_loss_estimate_limits():
    assert loss_estimate(0.1291, 1.0, 0.0).p_loss == 0.0
    with pytest.warns(RuntimeWarning):
        assert not loss_estimate(0.1291, 1.0, 2.0, Omega=10.0).valid


def test_writers(solutions, robust_pulses, tmp_path):
    pulses_to_csv(robust_pulses[16.0], tmp_path / "p.csv")
    angles_to_csv(time_parametrize(solutions[16.0], 1.0, 4097), tmp_path / "a.csv")
    p, a = read_csv(tmp_path / "p.csv"), read_csv(tmp_path / "a.csv")
    assert tuple(p) == PULSE_COLUMNS and tuple(a) == ANGLE_COLUMNS
    assert len(p["t_over_T"]) == 4097 and a["theta"][-1] == pytest.approx(math.pi / 2)


def test_reference_rejects_bad_duration():
    with pytest.raises(ValueError):
        reference_cos_sin(0.0)
