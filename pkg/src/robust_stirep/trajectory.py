"""Geometric trajectories phi(eta) of the constrained Euler-Lagrange problem.

A trajectory starts at ``phi(0) = 0`` with slope ``phidot_i`` and is bent
by three Lagrange multipliers. Alongside ``phi`` we carry the constraint
integrals ``xi0, xi1, xi2``, the generalized area and the loss integrand
as extra ODE states so that all of them share one error control.

Two routes are available:

``"area"`` (default)
    The independent variable is the partial area ``s``. The direction of
    motion in the (eta cos phi, phi) plane is tracked by an angle ``alpha``
    with ``tan(alpha) = dphi/deta / cos(phi)``. The system is smooth even
    for very steep initial slopes (``phidot_i = 250``), where the eta form
    is stiff near the endpoints.
``"eta"``
    Direct integration of ``d2phi/deta2 = el_rhs(...)``. Kept as an
    independent cross-check of the area route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, InsufficientCrossings, SingularTrajectory, StepFailure
from .io import write_csv

__all__ = [
    "LagrangeMultipliers",
    "Extremum",
    "TrajectorySolution",
    "el_rhs",
    "integrate",
    "theta_of_eta",
    "GUARD_PHI",
    "STATE_FIELDS",
]

GUARD_PHI = math.pi / 2 - 1e-6
RTOL = 1e-10
ATOL = 1e-12

# canonical layout of a state vector returned by state_at_eta / state_at_area
STATE_FIELDS = ("eta", "phi", "phi_prime", "xi0", "xi1", "xi2", "area", "loss")


@dataclass(frozen=True)
class LagrangeMultipliers:
    lambda0: float
    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("lambda0", "lambda1", "lambda2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    def __iter__(self):
        return iter((self.lambda0, self.lambda1, self.lambda2))

    def __neg__(self):
        return LagrangeMultipliers(-self.lambda0, -self.lambda1, -self.lambda2)

    def as_array(self):
        return np.array([self.lambda0, self.lambda1, self.lambda2])

    @classmethod
    def from_array(cls, values):
        a, b, c = (float(v) for v in values[:3])
        return cls(a, b, c)


def el_rhs(eta, phi, phi_prime, lam, sign_etadot=1):
    """Second derivative ``d2phi/deta2`` of the optimal trajectory.

    Parameters
    ----------
    eta, phi, phi_prime : float
        Position on the trajectory and its slope ``dphi/deta``.
    lam : LagrangeMultipliers or sequence of 3 floats
    sign_etadot : {+1, -1}
        Sign of ``deta/dt``; flips the multiplier term.

    Raises
    ------
    DomainError
        If ``|phi| >= pi/2`` where ``sec(phi)`` diverges.
    """
    if abs(phi) >= math.pi / 2:
        raise DomainError(f"|phi| = {abs(phi)!r} reached the sec(phi) singularity")
    l0, l1, l2 = lam
    c = math.cos(phi)
    q = phi_prime * phi_prime + c * c
    forcing = l0 / c + l1 * math.sin(eta) - l2 * math.cos(eta)
    return -(2.0 * phi_prime * phi_prime + c * c) * math.tan(phi) + sign_etadot * forcing * q**1.5


def _area_rhs(s, y, l0, l1, l2):
    # y = [phi, eta, alpha, xi0, xi1, xi2, loss]; d(area) = ds
    phi, eta, alpha = y[0], y[1], y[2]
    cp, sp = math.cos(phi), math.sin(phi)
    ca, sa = math.cos(alpha), math.sin(alpha)
    ce, se = math.cos(eta), math.sin(eta)
    deta = ca / (2.0 * cp)
    return [
        0.5 * sa,
        deta,
        0.5 * (l0 - sp / cp * ca + (l1 * se - l2 * ce) * cp),
        sp * deta,
        0.5 * (sa * ce + se * sp * ca),
        0.5 * (sa * se - ce * sp * ca),
        sp * sp,
    ]


def _eta_rhs(eta, y, l0, l1, l2):
    # y = [phi, phi_prime, xi0, xi1, xi2, area, loss]
    phi, dphi = y[0], y[1]
    cp, sp = math.cos(phi), math.sin(phi)
    ce, se = math.cos(eta), math.sin(eta)
    q = dphi * dphi + cp * cp
    darea = 2.0 * math.sqrt(q)
    return [
        dphi,
        el_rhs(eta, phi, dphi, (l0, l1, l2)),
        sp,
        dphi * ce + se * sp * cp,
        dphi * se - ce * sp * cp,
        darea,
        sp * sp * darea,
    ]


def _area_to_canonical(s, y):
    s = np.asarray(s, dtype=float)
    phi, eta, alpha = y[0], y[1], y[2]
    return np.array([eta, phi, np.tan(alpha) * np.cos(phi), y[3], y[4], y[5], s, y[6]])


def _eta_to_canonical(eta, y):
    eta = np.asarray(eta, dtype=float)
    return np.array([eta, y[0], y[1], y[2], y[3], y[4], y[5], y[6]])


def initial_direction(lam, phidot_i):
    """Sign of the first nonzero term of phi's Taylor series at ``eta = 0``.

    Zero means the trajectory is identically ``phi = 0``.
    """
    l0, l1, l2 = lam
    for value in (phidot_i, l0 - l2, l1):
        if value != 0.0:
            return 1.0 if value > 0 else -1.0
    return 0.0


@dataclass(frozen=True)
class Extremum:
    eta: float
    area: float
    phi: float
    kind: str  # "min" or "max"


@dataclass
class TrajectorySolution:
    """Sampled trajectory plus a dense interpolant.

    All arrays share ``eta_grid``. ``area_partial`` is the running
    generalized area and ``loss_partial`` the running integral of
    ``sin(phi)**2`` with respect to that area.
    """

    lam: LagrangeMultipliers
    phidot_i: float
    eta_grid: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    xi0: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    area_partial: np.ndarray
    loss_partial: np.ndarray
    zero_crossings: list
    crossing_states: list
    extrema: list
    status: str
    route: str
    _dense: Callable = field(repr=False)

    @property
    def eta_end(self):
        return float(self.eta_grid[-1])

    @property
    def area_end(self):
        return float(self.area_partial[-1])

    @property
    def branch(self):
        return initial_direction(self.lam, self.phidot_i)

    def state_at_eta(self, eta):
        """Canonical state (see ``STATE_FIELDS``) at one ``eta``."""
        eta = float(eta)
        if not (0.0 <= eta <= self.eta_end * (1 + 1e-14) + 1e-14):
            raise ValueError(f"eta={eta} outside [0, {self.eta_end}]")
        if self.route == "eta":
            return _eta_to_canonical(eta, self._dense(eta))
        return self.state_at_area(self._area_of_eta(eta))

    def state_at_area(self, s):
        if self.route != "area":
            raise ValueError("state_at_area needs an area-route trajectory")
        s = np.asarray(s, dtype=float)
        return _area_to_canonical(s, self._dense(s))

    def sample(self, eta):
        """Vectorized ``state_at_eta``; rows follow ``STATE_FIELDS``."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if self.route == "eta":
            return _eta_to_canonical(eta, self._dense(eta))
        return self.state_at_area(self._areas_of_eta(eta))

    def _areas_of_eta(self, eta):
        """Vectorized inverse of ``eta(s)``: Newton from the stored grid, kept in its bracket."""
        grid, areas = self.eta_grid, self.area_partial
        k = np.clip(np.searchsorted(grid, eta), 1, len(grid) - 1)
        lo, hi = areas[k - 1], areas[k]
        s = np.clip(np.interp(eta, grid, areas), lo, hi)
        ulp = 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(eta))
        for _ in range(30):
            y = self._dense(s)
            miss = eta - y[1]
            if np.all(np.abs(miss) <= ulp):
                break
            s = np.clip(s + miss * 2.0 * np.cos(y[0]) / np.cos(y[2]), lo, hi)
        else:
            s = np.array([self._area_of_eta(e) for e in eta])
        return s

    def _area_of_eta(self, eta):
        grid = self.eta_grid
        k = int(np.searchsorted(grid, eta))
        if k == 0 or grid[min(k, len(grid) - 1)] == eta:
            return float(self.area_partial[min(k, len(grid) - 1)])
        if k >= len(grid):
            return self.area_end
        lo, hi = self.area_partial[k - 1], self.area_partial[k]
        return brentq(lambda s: self._dense(s)[1] - eta, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def columns(self):
        return {
            "eta": self.eta_grid,
            "phi": self.phi,
            "phi_prime": self.phi_prime,
            "xi0": self.xi0,
            "xi1": self.xi1,
            "xi2": self.xi2,
            "area_partial": self.area_partial,
        }

    def to_csv(self, path):
        cols = self.columns()
        return write_csv(path, list(cols), list(cols.values()))


def _sign_guard(fn, start_sign):
    # keeps an event from firing at the initial point, where its value is 0
    def event(t, y, *args):
        return fn(t, y) if t > 0 else start_sign

    return event


def integrate(
    lam,
    phidot_i,
    eta_max=3 * math.pi,
    *,
    rtol=RTOL,
    atol=ATOL,
    stop_after=None,
    area_max=None,
    route="area",
    on_singular="raise",
    samples_per_step=8,
):
    """Integrate a trajectory from ``eta = 0`` up to ``eta_max``.

    Parameters
    ----------
    lam : LagrangeMultipliers or sequence of 3 floats
    phidot_i : float
        Initial slope ``dphi/deta`` at ``eta = 0``.
    eta_max : float
        Upper end of the eta range.
    stop_after : int, optional
        Stop at the ``stop_after``-th zero crossing.
    area_max : float, optional
        Stop once the partial area reaches this value (area route only).
    route : {"area", "eta"}
    on_singular : {"raise", "truncate"}
        What to do when the trajectory enters the ``sec(phi)`` guard band
        or ``eta`` stops increasing. ``"truncate"`` returns the part up to
        that point with ``status == "singular"``.
    samples_per_step : int
        Dense-output samples stored per accepted integrator step.
    """
    if not isinstance(lam, LagrangeMultipliers):
        lam = LagrangeMultipliers.from_array(lam)
    phidot_i = float(phidot_i)
    if not math.isfinite(phidot_i):
        raise ValueError("phidot_i must be finite")
    if eta_max <= 0:
        raise ValueError("eta_max must be positive")
    if route not in ("area", "eta"):
        raise ValueError(f"unknown route {route!r}")
    if route == "eta" and area_max is not None:
        raise ValueError("area_max is only supported on the area route")

    args = tuple(lam)
    d0 = initial_direction(lam, phidot_i)
    alpha0 = math.atan(phidot_i)

    if route == "area":
        rhs, y0 = _area_rhs, [0.0, 0.0, alpha0, 0.0, 0.0, 0.0, 0.0]
        # eta advances at least at rate cos(alpha)/2 in s, so this bound is generous
        span_end = float(area_max) if area_max is not None else 2.0 * eta_max / max(math.cos(alpha0), 1e-3) + 40.0
        to_canon = _area_to_canonical
        phi_of = lambda t, y: y[0]
        slope_of = lambda t, y: y[2]
        slope_rate = lambda t, y: _area_rhs(t, y, *args)[2]
        slope_start = alpha0
    else:
        rhs, y0 = _eta_rhs, [0.0, phidot_i, 0.0, 0.0, 0.0, 0.0, 0.0]
        span_end = float(eta_max)
        to_canon = _eta_to_canonical
        phi_of = lambda t, y: y[0]
        slope_of = lambda t, y: y[1]
        slope_rate = lambda t, y: el_rhs(t, y[0], y[1], args)
        slope_start = phidot_i

    events = []
    crossing = None
    if d0 != 0.0:
        crossing = _sign_guard(phi_of, d0)
        crossing.terminal = int(stop_after) if stop_after else False
        events.append(crossing)
    extremum = None
    if d0 != 0.0:
        extremum = _sign_guard(slope_of, slope_start if slope_start != 0.0 else d0)
        extremum.terminal = False
        events.append(extremum)
    guard = lambda t, y, *a: GUARD_PHI - abs(y[0])
    guard.terminal = True
    events.append(guard)
    if route == "area":
        reach = lambda t, y, *a: y[1] - eta_max
        reach.terminal = True
        reach.direction = 1.0
        reversal = lambda t, y, *a: math.cos(y[2])
        reversal.terminal = True
        reversal.direction = -1.0
        events += [reach, reversal]

    sol = solve_ivp(
        rhs, (0.0, span_end), y0, method="DOP853", args=args, rtol=rtol, atol=atol,
        events=events, dense_output=True,
    )
    if sol.status == -1:
        raise StepFailure(f"integrator failed: {sol.message}")

    ev = dict(zip(range(len(events)), zip(sol.t_events, sol.y_events)))
    k_extremum = 1 if crossing is not None else None
    k_guard = 2 if crossing is not None else 0

    status = "complete"
    if sol.status == 1:
        if len(ev[k_guard][0]):
            status = "singular"
        elif route == "area" and len(ev[k_guard + 2][0]):
            status = "singular"
        elif crossing is not None and stop_after and len(ev[0][0]) >= stop_after:
            status = "stopped"
        else:
            status = "eta_max"
    elif route == "area" and area_max is None:
        status = "area_bound"
    extrema_raw = []
    for tc, yc in zip(*(ev[k_extremum] if k_extremum is not None else ((), ()))):
        kind = "min" if slope_rate(tc, yc) > 0 else "max"
        extrema_raw.append((float(tc), kind))

    # zero crossings: sign changes of phi between step ends and extrema,
    # so that a shallow dip inside a single step is not missed
    t = sol.t
    crossing_t = []
    if d0 != 0.0:
        phi_dense = lambda x: float(sol.sol(x)[0])
        breaks = np.unique(np.concatenate([t[1:], [e[0] for e in extrema_raw]]))
        prev_t, prev_sign = 0.0, d0
        for b in breaks:
            v = phi_dense(b)
            if v == 0.0:
                crossing_t.append(float(b))
                prev_t, prev_sign = b, -prev_sign
                continue
            if np.sign(v) != prev_sign:
                crossing_t.append(brentq(phi_dense, prev_t, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
                prev_sign = np.sign(v)
            prev_t = b
    if stop_after and len(crossing_t) >= stop_after:
        t_stop = crossing_t[stop_after - 1]
        crossing_t = crossing_t[:stop_after]
        t = np.append(t[t < t_stop], t_stop)
        extrema_raw = [e for e in extrema_raw if e[0] <= t_stop]
        status = "stopped"

    if status == "singular" and on_singular == "raise":
        raise SingularTrajectory(
            f"trajectory left the regular domain at eta={float(to_canon(sol.t[-1], sol.y[:, -1])[0]):.6g}"
        )

    # sample each accepted step on a uniform sub-grid of the dense output
    m = max(int(samples_per_step), 1)
    frac = np.arange(m) / m
    fine = np.concatenate([(t[:-1, None] + np.diff(t)[:, None] * frac).ravel(), t[-1:]])
    canon = to_canon(fine, sol.sol(fine))
    canon[1, 0] = 0.0

    crossing_states = [to_canon(tc, sol.sol(tc)) for tc in crossing_t]
    extrema = []
    for tc, kind in extrema_raw:
        st = to_canon(tc, sol.sol(tc))
        extrema.append(Extremum(eta=float(st[0]), area=float(st[6]), phi=float(st[1]), kind=kind))

    return TrajectorySolution(
        lam=lam,
        phidot_i=phidot_i,
        eta_grid=canon[0],
        phi=canon[1],
        phi_prime=canon[2],
        xi0=canon[3],
        xi1=canon[4],
        xi2=canon[5],
        area_partial=canon[6],
        loss_partial=canon[7],
        zero_crossings=[float(s[0]) for s in crossing_states],
        crossing_states=crossing_states,
        extrema=extrema,
        status=status,
        route=route,
        _dense=sol.sol,
    )


def nth_crossing(traj, index):
    """Canonical state at the ``index``-th (1-based) zero crossing."""
    if index < 1 or len(traj.crossing_states) < index:
        raise InsufficientCrossings(
            f"requested crossing {index}, found {len(traj.crossing_states)} before eta={traj.eta_end:.6g}"
        )
    return traj.crossing_states[index - 1]


def theta_of_eta(traj, eta):
    """Mixing angle ``theta = -xi0`` at ``eta`` (for increasing eta)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0) or np.any(eta > traj.eta_end * (1 + 1e-14) + 1e-14):
        raise ValueError(f"eta outside [0, {traj.eta_end}]")
    if eta.ndim == 0:
        return float(-traj.state_at_eta(float(eta))[3])
    return -traj.sample(eta)[3]
