import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from robust_stirep.errors import DomainError
from robust_stirep.solver import terminal_points
from robust_stirep.trajectory import RTOL, ATOL, LagrangeMultipliers, el_rhs, integrate, theta_of_eta

LAM0 = LagrangeMultipliers(0.1930790914, -0.0838224029, 0.0102504990)
LAM250 = LagrangeMultipliers(-0.56596, 0.93853, 1.08283)


def test_el_rhs_vanishes_at_origin_without_multipliers():
    assert el_rhs(0.0, 0.0, 0.0, (0.0, 0.0, 0.0)) == 0.0


def test_el_rhs_at_origin_is_multiplier_combination():
    assert el_rhs(0.0, 0.0, 0.0, LAM0) == pytest.approx(0.1828285924, abs=1e-15)


def test_el_rhs_matches_arbitrary_precision():
    mpmath.mp.dps = 40
    eta, phi, y = mpmath.pi / 2, mpmath.mpf("0.3"), mpmath.mpf("0.5")
    c = mpmath.cos(phi)
    exact = -(2 * y**2 + c**2) * mpmath.tan(phi) + (1 / c) * (y**2 + c**2) ** mpmath.mpf(1.5)
    assert el_rhs(math.pi / 2, 0.3, 0.5, (1.0, 0.0, 0.0)) == pytest.approx(float(exact), rel=1e-14)


@pytest.mark.parametrize("phi", [math.pi / 2, -math.pi / 2, 2.0])
def test_el_rhs_rejects_secant_singularity(phi):
    with pytest.raises(DomainError):
        el_rhs(0.0, phi, 0.0, (1.0, 0.0, 0.0))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-10, 10), st.floats(-1.5, 1.5), st.floats(-5, 5),
    st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
)
def test_reversed_time_flips_multipliers(eta, phi, y, lam):
    neg = tuple(-v for v in lam)
    assert el_rhs(eta, phi, y, lam, -1) == pytest.approx(el_rhs(eta, phi, y, neg, 1), rel=1e-12, abs=1e-12)


def test_multipliers_reject_non_finite():
    with pytest.raises(ValueError):
        LagrangeMultipliers(float("nan"), 0.0, 0.0)


def test_null_trajectory():
    traj = integrate((0.0, 0.0, 0.0), 0.0, eta_max=2.0)
    assert traj.zero_crossings == []
    end = traj.state_at_eta(2.0)
    assert np.allclose(end[[1, 3, 4, 5]], 0.0, atol=1e-14)
    assert end[6] == pytest.approx(4.0, rel=1e-12)


def test_tabulated_multipliers_return_near_published_endpoint():
    traj = integrate(LAM0, 0.0, on_singular="truncate")
    first = terminal_points(traj, touch_tol=1e-4)[0]
    assert first[0] / math.pi == pytest.approx(2.9225, abs=2e-3)


def test_large_slope_third_crossing():
    traj = integrate(LAM250, 250.0, on_singular="truncate")
    assert len(traj.zero_crossings) >= 3
    assert traj.crossing_states[2][0] / math.pi == pytest.approx(1.5454, abs=1e-3)


def test_mixing_angle_at_end_and_midpoint(solutions):
    for sol in solutions.values():
        assert abs(theta_of_eta(sol.traj, sol.eta_f)) == pytest.approx(math.pi / 2, abs=1e-6)
        assert abs(theta_of_eta(sol.traj, sol.eta_f / 2)) == pytest.approx(math.pi / 4, abs=1e-6)


@pytest.mark.parametrize("phidot_i", [0.0, 0.4, 16.0])
def test_area_matches_direct_quadrature(solutions, phidot_i):
    sol = solutions[phidot_i]
    # a steep initial slope needs a fine grid near eta = 0
    eta = np.linspace(0.0, sol.eta_f, 200001)
    st_ = sol.traj.sample(eta)
    area = simpson(2.0 * np.hypot(st_[2], np.cos(st_[1])), x=eta)
    assert area == pytest.approx(sol.area, rel=1e-8)


def test_eta_route_agrees_with_area_route(solutions):
    sol = solutions[250.0]
    geo = integrate(sol.lam, sol.phidot_i, eta_max=sol.eta_f, route="eta")
    eta = np.linspace(0.0, sol.eta_f, 57)
    assert np.allclose(geo.sample(eta)[1:7], sol.traj.sample(eta)[1:7], atol=1e-8)


@pytest.mark.parametrize("phidot_i", [0.4, 16.0, 250.0])
def test_halving_tolerance_keeps_endpoint(solutions, phidot_i):
    sol = solutions[phidot_i]
    fine = integrate(sol.lam, phidot_i, eta_max=sol.eta_f + 0.5, rtol=RTOL / 2, atol=ATOL / 2, on_singular="truncate")
    eta_f = min(fine.zero_crossings, key=lambda e: abs(e - sol.eta_f))
    assert abs(eta_f - sol.eta_f) < 1e-8
