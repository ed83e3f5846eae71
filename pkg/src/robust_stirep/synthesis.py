"""From geometric trajectories to time-domain pump and Stokes pulses.

The time parametrization is the energy-optimal one: the generalized Rabi
frequency ``Omega = sqrt(Omega_P**2 + Omega_S**2)`` is constant, so the
partial area grows linearly, ``s(t) = Omega * t``. Internally hbar = 1 and
frequencies are in units of ``1/T`` when ``T = 1``.

Sign convention: pulses are built on the branch whose target is
``theta(T) = +pi/2`` (final state ``+|3>``). Solutions converged on the
other branch are mirrored (``phi -> -phi``, ``theta -> -theta``), which
flips the sign of the pump only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .errors import GridMismatch
from .io import write_csv, write_json
from .trajectory import integrate

__all__ = [
    "PulseSet",
    "AngleDynamics",
    "LossEstimate",
    "time_parametrize",
    "synthesize",
    "reference_cos_sin",
    "metrics",
    "loss_area",
    "loss_estimate",
    "threshold_duration",
    "pulses_to_csv",
    "angles_to_csv",
    "metrics_to_json",
]

PULSE_COLUMNS = ("t_over_T", "omega_p_T", "omega_s_T", "abs_omega_p_T", "abs_omega_s_T")
ANGLE_COLUMNS = ("t_over_T", "phi", "eta", "theta", "phi_dot_T", "eta_dot_T", "theta_dot_T")


@dataclass
class PulseSet:
    """Pump/Stokes Rabi frequencies on a uniform grid over ``[0, T]``.

    ``fields(t)`` evaluates both pulses at arbitrary times (array in,
    ``(omega_p, omega_s)`` out) and is what the propagator samples.
    """

    t_grid: np.ndarray
    omega_p: np.ndarray
    omega_s: np.ndarray
    T: float
    Omega: float
    label: str
    fields: Callable = field(repr=False, default=None)

    def __post_init__(self):
        if not (len(self.t_grid) == len(self.omega_p) == len(self.omega_s)):
            raise GridMismatch("pulse arrays and time grid differ in length")
        if self.fields is None:
            t0, p0, s0 = self.t_grid, self.omega_p, self.omega_s
            self.fields = lambda t: (np.interp(t, t0, p0), np.interp(t, t0, s0))

    @property
    def amplitude(self):
        return np.hypot(self.omega_p, self.omega_s)

    def scaled(self, factor):
        """Pulses multiplied by ``factor`` (amplitude error ``1 + eps``)."""
        f = self.fields
        return PulseSet(
            self.t_grid, factor * self.omega_p, factor * self.omega_s, self.T, factor * self.Omega,
            self.label, lambda t: tuple(factor * v for v in f(t)),
        )

    def time_reversed(self):
        """``Omega_P(T - t)`` and ``Omega_S(T - t)`` with the roles kept."""
        f, T = self.fields, self.T
        return PulseSet(
            self.t_grid, self.omega_p[::-1].copy(), self.omega_s[::-1].copy(), T, self.Omega,
            self.label + "-reversed", lambda t: f(T - np.asarray(t)),
        )


@dataclass
class AngleDynamics:
    t_grid: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    phi_dot: np.ndarray
    eta_dot: np.ndarray
    theta_dot: np.ndarray
    T: float


@dataclass(frozen=True)
class LossEstimate:
    p_loss: float
    valid: bool


def _mirror_sign(sol, target_branch):
    return 1.0 if sol.theta_f * target_branch >= 0 else -1.0


def _angles_from_area(sol, s, omega, m):
    """Angles and their time derivatives at partial areas ``s``."""
    st = sol.traj.state_at_area(np.clip(s, 0.0, sol.area))
    eta, phi, dphi = st[0], st[1], st[2]
    alpha = np.arctan2(dphi, np.cos(phi))
    phi_dot = 0.5 * omega * np.sin(alpha)
    eta_dot = 0.5 * omega * np.cos(alpha) / np.cos(phi)
    theta = -st[3]
    return m * phi, eta, m * theta, m * phi_dot, eta_dot, -m * eta_dot * np.sin(phi)


def time_parametrize(sol, T=1.0, n=4096, *, method="area", target_branch=1):
    """Angle dynamics of ``sol`` under the constant-amplitude parametrization.

    Parameters
    ----------
    sol : ExtremalSolution
    T : float
        Total duration; ``Omega = area / T``.
    n : int
        Number of uniform time points including both ends.
    method : {"area", "ode"}
        ``"area"`` reads the trajectory at partial area ``Omega * t``.
        ``"ode"`` integrates ``deta/dt = Omega / (2 sqrt(phi'**2 + cos(phi)**2))``
        over an eta-parametrized copy of the trajectory; the two agree to
        integrator accuracy and serve as cross-checks of each other.
    target_branch : {+1, -1}
        Sign of ``theta(T)``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    omega = sol.area / T
    m = _mirror_sign(sol, target_branch)
    t = np.linspace(0.0, T, n)
    if method == "area":
        phi, eta, theta, phi_dot, eta_dot, theta_dot = _angles_from_area(sol, omega * t, omega, m)
    elif method == "ode":
        geo = integrate(sol.lam, sol.phidot_i, eta_max=sol.eta_f, route="eta", on_singular="raise")

        def rhs(_, y):
            st = geo.state_at_eta(min(max(y[0], 0.0), sol.eta_f))
            return [0.5 * omega / math.hypot(st[2], math.cos(st[1]))]

        path = solve_ivp(rhs, (0.0, T), [0.0], method="DOP853", t_eval=t, rtol=1e-12, atol=1e-14)
        eta = np.minimum(path.y[0], sol.eta_f)
        st = geo.sample(eta)
        phi, dphi = st[1], st[2]
        eta_dot = 0.5 * omega / np.hypot(dphi, np.cos(phi))
        phi_dot = dphi * eta_dot
        theta = -st[3]
        phi, theta, phi_dot = m * phi, m * theta, m * phi_dot
        theta_dot = -eta_dot * np.sin(phi)
    else:
        raise ValueError(f"unknown method {method!r}")
    return AngleDynamics(t, phi, eta, theta, phi_dot, eta_dot, theta_dot, float(T))


def _pulses_from_angles(phi, theta, phi_dot, eta_dot):
    cp = np.cos(phi)
    omega_p = 2.0 * (eta_dot * cp * np.sin(theta) - phi_dot * np.cos(theta))
    omega_s = 2.0 * (-eta_dot * cp * np.cos(theta) - phi_dot * np.sin(theta))
    return omega_p, omega_s


def synthesize(sol, T=1.0, n=4096, *, target_branch=1):
    """Pump and Stokes pulses realizing ``sol`` in duration ``T``."""
    angles = time_parametrize(sol, T, n, target_branch=target_branch)
    omega = sol.area / T
    m = _mirror_sign(sol, target_branch)
    omega_p, omega_s = _pulses_from_angles(angles.phi, angles.theta, angles.phi_dot, angles.eta_dot)

    def fields(t):
        phi, _, theta, phi_dot, eta_dot, _ = _angles_from_area(sol, omega * np.asarray(t, dtype=float), omega, m)
        return _pulses_from_angles(phi, theta, phi_dot, eta_dot)

    return PulseSet(angles.t_grid, omega_p, omega_s, float(T), omega, "robust-extremal", fields)


def reference_cos_sin(T=1.0, n=4096):
    """Area-optimal transfer without robustness: a cos/sin pair of constant amplitude."""
    if T <= 0:
        raise ValueError("T must be positive")
    amp = math.sqrt(3.0) * math.pi / T

    def fields(t):
        x = 0.5 * math.pi * np.asarray(t, dtype=float) / T
        return amp * np.cos(x), amp * np.sin(x)

    t = np.linspace(0.0, T, n)
    p, s = fields(t)
    return PulseSet(t, p, s, float(T), amp, "reference-cos-sin", fields)


def _check_grid(pulses, angles):
    if angles is not None and (
        len(angles.t_grid) != len(pulses.t_grid) or not np.allclose(angles.t_grid, pulses.t_grid, rtol=0, atol=1e-12 * pulses.T)
    ):
        raise GridMismatch("pulses and angles are sampled on different grids")


def loss_area(pulses, angles=None):
    """``A2 / T``: time-average of the excited-state population.

    Uses ``sin(phi)**2`` from ``angles`` when given, otherwise the
    population obtained by propagating ``pulses``.
    """
    _check_grid(pulses, angles)
    if angles is not None:
        p2 = np.sin(angles.phi) ** 2
    else:
        from .tdse import populations_history

        p2 = populations_history(pulses, n_steps=len(pulses.t_grid) - 1).p2
    return float(simpson(p2, x=pulses.t_grid)) / pulses.T


def metrics(pulses, angles=None):
    """Return ``(area, energy_metric, a2_over_T)``.

    ``area`` is in radians, ``energy_metric`` is ``T / pi**2`` times the
    pulse energy (hbar = 1).
    """
    _check_grid(pulses, angles)
    t = pulses.t_grid
    sq = pulses.omega_p**2 + pulses.omega_s**2
    area = float(simpson(np.sqrt(sq), x=t))
    energy = float(simpson(sq, x=t)) * pulses.T / math.pi**2
    if not np.any(sq):
        return 0.0, 0.0, 0.0
    return area, energy, loss_area(pulses, angles)


def loss_estimate(a2_over_T, T, Gamma, Omega=None):
    """First-order loss ``Gamma * T * (A2/T)``.

    ``valid`` is False (and a warning is issued) when ``Gamma > Omega / 10``,
    where the perturbative estimate should not be trusted.
    """
    p_loss = Gamma * T * a2_over_T
    valid = True
    if Omega is not None and Gamma > Omega / 10:
        valid = False
        warnings.warn(f"decay rate {Gamma:g} exceeds a tenth of the Rabi frequency {Omega:g}", RuntimeWarning)
    return LossEstimate(float(p_loss), valid)


def threshold_duration(a2_over_T, p_loss=1e-4, Gamma=1.0):
    """Longest duration keeping the estimated loss at or below ``p_loss``."""
    return p_loss / (Gamma * a2_over_T)


def pulses_to_csv(pulses, path):
    T = pulses.T
    cols = [pulses.t_grid / T, pulses.omega_p * T, pulses.omega_s * T, np.abs(pulses.omega_p) * T, np.abs(pulses.omega_s) * T]
    return write_csv(path, list(PULSE_COLUMNS), cols)


def angles_to_csv(angles, path):
    T = angles.T
    cols = [angles.t_grid / T, angles.phi, angles.eta, angles.theta,
            angles.phi_dot * T, angles.eta_dot * T, angles.theta_dot * T]
    return write_csv(path, list(ANGLE_COLUMNS), cols)


def metrics_to_json(pulses, angles, path, **extra):
    area, energy, a2 = metrics(pulses, angles)
    record = {
        "label": pulses.label,
        "T": pulses.T,
        "Omega_T": pulses.Omega * pulses.T,
        "area_over_pi": area / math.pi,
        "energy_metric": energy,
        "a2_over_T": a2,
        **extra,
    }
    return write_json(path, record)
