"""Three-level Schrodinger propagation with amplitude errors and decay.

The Hamiltonian in the bare basis ``|1>, |2>, |3>`` (hbar = 1) is

    H = 1/2 [[0, P, 0], [P, -i Gamma, S], [0, S, 0]]

and an amplitude error scales both pulses, ``P, S -> (1 + eps) P, S``.

Time stepping uses the fourth-order commutator-free Magnus scheme built on
the two Gauss nodes of each step. Each factor is the exponential of a
Hamiltonian of the same tridiagonal form, which for ``Gamma = 0`` has the
closed form ``1 - i sin(w h)/w K + (cos(w h) - 1)/w**2 K**2`` with
``w = sqrt(P**2 + S**2) / 2``; the result is unitary to rounding.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.linalg import expm
from scipy.optimize import brentq

from .io import write_csv
from .synthesis import AngleDynamics

__all__ = [
    "QuantumState",
    "PopulationHistory",
    "RobustnessProfile",
    "propagate",
    "propagate_many",
    "step_propagators",
    "populations_history",
    "robustness_profile",
    "angles_from_pulses",
    "reference_angle_dynamics",
    "deviation_O2",
    "deviation_O3",
    "deviation_integrands",
    "iterated_double",
    "iterated_triple",
    "profile_to_csv",
    "populations_to_csv",
]

N_STEPS = 8192
CHUNK = 16  # eps values per batch; fixed so results never depend on worker count
UHF_THRESHOLD = 1e-4

_SQ3 = math.sqrt(3.0)
_C1, _C2 = 0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6
_A1, _A2 = 0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6


@dataclass
class QuantumState:
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(3)

    @classmethod
    def basis(cls, k):
        """Bare state ``|k>`` for ``k`` in 1, 2, 3."""
        a = np.zeros(3, dtype=complex)
        a[k - 1] = 1.0
        return cls(a)

    @property
    def populations(self):
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other):
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass
class PopulationHistory:
    t_grid: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    norm: np.ndarray
    T: float


@dataclass
class RobustnessProfile:
    eps_grid: np.ndarray
    fidelity: np.ndarray
    log10_infidelity: np.ndarray
    width_uhf: float
    width_minus: float
    width_plus: float


def _hamiltonians(P, S, gamma):
    K = np.zeros(P.shape + (3, 3), dtype=complex)
    K[..., 0, 1] = K[..., 1, 0] = 0.5 * P
    K[..., 1, 2] = K[..., 2, 1] = 0.5 * S
    K[..., 1, 1] = -0.5j * gamma
    return K


def _exp_step(P, S, h, gamma):
    """``exp(-i h K)`` for stacked tridiagonal ``K`` built from ``P``, ``S``."""
    K = _hamiltonians(P, S, gamma)
    if gamma:
        return expm(-1j * h * K)
    w = 0.5 * np.hypot(P, S)
    wh = w * h
    safe = np.where(w > 0, w, 1.0)
    a = np.where(w > 0, np.sin(wh) / safe, h)
    b = np.where(w > 0, (np.cos(wh) - 1.0) / safe**2, -0.5 * h * h)
    return np.eye(3) - 1j * a[..., None, None] * K + b[..., None, None] * (K @ K)


def _gauss_fields(pulses, n_steps):
    h = pulses.T / n_steps
    t = np.arange(n_steps) * h
    P1, S1 = pulses.fields(t + _C1 * h)
    P2, S2 = pulses.fields(t + _C2 * h)
    return h, (np.asarray(P1), np.asarray(S1), np.asarray(P2), np.asarray(S2))


def step_propagators(pulses, eps=0.0, gamma=0.0, n_steps=N_STEPS):
    """Per-step propagators, shape ``(len(eps), n_steps, 3, 3)`` (or without the eps axis)."""
    h, (P1, S1, P2, S2) = _gauss_fields(pulses, n_steps)
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=float))
    scale = (1.0 + eps_arr)[:, None]
    # Each CF4 factor carries half of the decay.
    first = _exp_step(scale * (_A1 * P1 + _A2 * P2), scale * (_A1 * S1 + _A2 * S2), h, 0.5 * gamma)
    second = _exp_step(scale * (_A2 * P1 + _A1 * P2), scale * (_A2 * S1 + _A1 * S2), h, 0.5 * gamma)
    U = second @ first
    return U if np.ndim(eps) else U[0]


def _tree_product(U):
    """Ordered product ``U[n-1] @ ... @ U[0]`` along axis -3, by pairwise halving."""
    while U.shape[-3] > 1:
        if U.shape[-3] % 2:
            last = U[..., -1:, :, :]
            U = U[..., :-1, :, :]
        else:
            last = None
        U = U[..., 1::2, :, :] @ U[..., 0::2, :, :]
        if last is not None:
            U = np.concatenate([U, last], axis=-3)
    return U[..., 0, :, :]


def _initial_vector(initial):
    if initial is None:
        return QuantumState.basis(1).amplitudes
    if isinstance(initial, QuantumState):
        return initial.amplitudes
    return np.asarray(initial, dtype=complex)


def _propagate_chunk(pulses, eps_chunk, gamma, psi0, n_steps):
    U = step_propagators(pulses, eps_chunk, gamma, n_steps)
    return _tree_product(U) @ psi0


def propagate_many(pulses, eps, gamma=0.0, initial=None, n_steps=N_STEPS, jobs=1):
    """Final amplitudes for every ``eps``; shape ``(len(eps), 3)``.

    The ``eps`` list is cut into fixed chunks so the arithmetic, and hence
    the result, is identical for any ``jobs``.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(np.abs(eps) > 0.5):
        raise ValueError("|eps| must not exceed 0.5")
    psi0 = _initial_vector(initial)
    chunks = [eps[i:i + CHUNK] for i in range(0, len(eps), CHUNK)]
    work = lambda c: _propagate_chunk(pulses, c, gamma, psi0, n_steps)
    if jobs and jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate(parts) if parts else np.empty((0, 3), dtype=complex)


def propagate(pulses, eps=0.0, gamma=0.0, initial=None, n_steps=N_STEPS):
    """Final state for one amplitude error ``eps`` and decay rate ``gamma``."""
    return QuantumState(propagate_many(pulses, [eps], gamma, initial, n_steps)[0])


def _history(pulses, eps, gamma, initial, n_steps):
    U = step_propagators(pulses, eps, gamma, n_steps)
    states = np.empty((n_steps + 1, 3), dtype=complex)
    states[0] = _initial_vector(initial)
    for k in range(n_steps):
        states[k + 1] = U[k] @ states[k]
    return states


def populations_history(pulses, eps=0.0, gamma=0.0, initial=None, n_steps=None):
    """Populations at every step boundary (``n_steps + 1`` uniform times)."""
    n_steps = n_steps or len(pulses.t_grid) - 1
    states = _history(pulses, eps, gamma, initial, n_steps)
    pops = np.abs(states) ** 2
    t = np.linspace(0.0, pulses.T, n_steps + 1)
    return PopulationHistory(t, pops[:, 0], pops[:, 1], pops[:, 2], np.sqrt(pops.sum(axis=1)), pulses.T)


def _infidelity(amplitudes):
    # population of |3> is the overlap with the target up to a global phase
    return 1.0 - np.abs(amplitudes[..., 2]) ** 2


def robustness_profile(pulses, eps_grid=None, *, n_steps=N_STEPS, jobs=1, threshold=UHF_THRESHOLD, xtol=1e-6):
    """Fidelity of the transfer to ``|3>`` against the amplitude error.

    ``width_uhf`` is the smaller of the distances from ``eps = 0`` to the
    nearest point on either side where the infidelity reaches
    ``threshold``; each is bracketed on the grid and refined by Brent's
    method to ``xtol``.
    """
    if eps_grid is None:
        eps_grid = np.linspace(-0.2, 0.2, 401)
    eps_grid = np.asarray(eps_grid, dtype=float)
    zero = np.flatnonzero(eps_grid == 0.0)
    if not len(zero):
        raise ValueError("eps grid must contain 0")
    amps = propagate_many(pulses, eps_grid, n_steps=n_steps, jobs=jobs)
    inf = _infidelity(amps)
    fid = 1.0 - inf
    log_inf = np.log10(np.maximum(inf, 1e-16))

    def g(e):
        return _infidelity(propagate_many(pulses, [e], n_steps=n_steps)[0]) - threshold

    i0 = int(zero[0])
    widths = []
    for step in (1, -1):
        if inf[i0] >= threshold:
            widths.append(0.0)
            continue
        i = i0
        while 0 <= i + step < len(eps_grid) and inf[i + step] < threshold:
            i += step
        if not 0 <= i + step < len(eps_grid):
            widths.append(abs(eps_grid[i]))
            continue
        a, b = sorted((eps_grid[i], eps_grid[i + step]))
        widths.append(abs(brentq(g, a, b, xtol=xtol)))
    return RobustnessProfile(eps_grid, fid, log_inf, min(widths), widths[1], widths[0])


# ---------------------------------------------------------------------------
# angles and deviation integrals


def _angles_from_unitaries(t, U, P, S, T):
    """Angles from full propagators ``U(t)`` whose columns are the dressed states."""
    phi = np.arcsin(np.clip(U[:, 1, 0].imag, -1.0, 1.0))
    theta = np.unwrap(np.arctan2(U[:, 2, 0].real, U[:, 0, 0].real))
    eta = np.unwrap(np.arctan2(U[:, 1, 2].imag, U[:, 1, 1].real))
    phi_dot = -0.5 * (P * np.cos(theta) + S * np.sin(theta))
    eta_dot = 0.5 * (P * np.sin(theta) - S * np.cos(theta)) / np.cos(phi)
    theta_dot = -eta_dot * np.sin(phi)
    return AngleDynamics(t, phi, eta, theta, phi_dot, eta_dot, theta_dot, float(T))


def angles_from_pulses(pulses, n_steps=None):
    """Recover ``phi, eta, theta`` and their rates by propagating the identity."""
    n_steps = n_steps or len(pulses.t_grid) - 1
    steps = step_propagators(pulses, 0.0, 0.0, n_steps)
    U = np.empty((n_steps + 1, 3, 3), dtype=complex)
    U[0] = np.eye(3)
    for k in range(n_steps):
        U[k + 1] = steps[k] @ U[k]
    t = np.linspace(0.0, pulses.T, n_steps + 1)
    P, S = pulses.fields(t)
    return _angles_from_unitaries(t, U, np.asarray(P), np.asarray(S), pulses.T)


def reference_angle_dynamics(T=1.0, t=None, n=4097):
    """Exact angle dynamics of the cos/sin reference pair.

    In the frame rotating with the pulse mixing angle the Hamiltonian is
    constant, so the propagator is one matrix exponential per time point.
    """
    t = np.linspace(0.0, T, n) if t is None else np.asarray(t, dtype=float)
    amp = _SQ3 * math.pi / T
    k = 0.5 * math.pi / T
    # generator in the (bright, |2>, dark) basis
    M = np.array([[0, -0.5j * amp, k], [-0.5j * amp, 0, 0], [-k, 0, 0]], dtype=complex)
    c = expm(t[:, None, None] * M)
    ang = k * t
    R = np.zeros((len(t), 3, 3))
    R[:, 0, 0], R[:, 2, 0] = np.cos(ang), np.sin(ang)
    R[:, 1, 1] = 1.0
    R[:, 0, 2], R[:, 2, 2] = -np.sin(ang), np.cos(ang)
    # at t = 0 the rotating basis coincides with the bare one
    U = R @ c
    return _angles_from_unitaries(t, U, amp * np.cos(ang), amp * np.sin(ang), T)


def deviation_integrands(angles):
    """``n``, ``Im p`` and ``r`` on the angle grid."""
    sp, cp = np.sin(angles.phi), np.cos(angles.phi)
    se, ce = np.sin(angles.eta), np.cos(angles.eta)
    n = -angles.eta_dot * se * sp * cp - angles.phi_dot * ce
    p_im = angles.eta_dot * ce * sp * cp - angles.phi_dot * se
    r = -angles.eta_dot * cp**2
    return n, p_im, r


def deviation_O2(angles):
    """Second-order infidelity coefficient (per unit ``eps**2``)."""
    n, p_im, _ = deviation_integrands(angles)
    t = angles.t_grid
    return float(simpson(n, x=t) ** 2 + simpson(p_im, x=t) ** 2)


def _cumulative(f, t):
    return cumulative_simpson(f, x=t, initial=0.0)


def iterated_double(a, b, t):
    """``int_0^T a(t) int_0^t b(t') dt' dt`` in O(N).

    Integration by parts gives the companion identity
    ``iterated_double(a, b) + iterated_double(b, a) = int a * int b``.
    """
    return float(simpson(a * _cumulative(b, t), x=t))


def iterated_triple(a, b, c, t):
    """``int a(t1) int^t1 b(t2) int^t2 c(t3)`` reduced to single integrals.

    Swapping the two outer integrations turns it into
    ``int a * int b w - int u b w`` with ``w = int_0^t c`` and ``u = int_0^t a``.
    """
    w = _cumulative(c, t)
    u = _cumulative(a, t)
    return float(simpson(a, x=t) * simpson(b * w, x=t) - simpson(u * b * w, x=t))


def deviation_O3(angles):
    """Third-order infidelity coefficient (per unit ``eps**3``)."""
    n, p_im, r = deviation_integrands(angles)
    t = angles.t_grid
    N = simpson(n, x=t)
    Pi = simpson(p_im, x=t)
    return float(-2.0 * (N * iterated_double(r, p_im, t) - Pi * iterated_double(r, n, t)))


def profile_to_csv(profile, path):
    return write_csv(path, ["epsilon", "fidelity", "log10_infidelity"],
                     [profile.eps_grid, profile.fidelity, profile.log10_infidelity])


def populations_to_csv(history, path):
    return write_csv(path, ["t_over_T", "p1", "p2", "p3", "norm"],
                     [history.t_grid / history.T, history.p1, history.p2, history.p3, history.norm])
