"""Shooting solver for the extremal trajectories and their one-parameter family.

For a fixed initial slope ``phidot_i`` we look for multipliers
``(lambda0, lambda1, lambda2)`` and a terminal point where

* ``phi`` returns to zero,
* ``xi0`` reaches ``branch * pi/2`` (``theta`` reaches ``-branch * pi/2``),
* ``xi1`` and ``xi2`` vanish.

The terminal point is parametrized by its partial area ``A`` so the
unknown vector is ``(lambda0, lambda1, lambda2, A)`` and the system is
square. At ``phidot_i = 0`` the optimal trajectory does not cross zero but
touches it tangentially; there the terminal point is the local extremum of
``phi`` and the four conditions are solved in the least-squares sense for
the three multipliers (the system is consistent, so the residual still
goes to zero).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    InsufficientCrossings,
    NoConvergence,
    SingularJacobian,
    SingularTrajectory,
    StepFailure,
    TrajectoryError,
)
from .io import write_csv, write_json
from .trajectory import (
    ATOL,
    GUARD_PHI,
    RTOL,
    LagrangeMultipliers,
    TrajectorySolution,
    _area_rhs,
    el_rhs,
    initial_direction,
    integrate,
)

__all__ = [
    "ExtremalSolution",
    "residuals",
    "solve_extremum",
    "sweep_family",
    "crossing_rule",
    "default_grid",
    "parse_grid",
    "family_to_json",
    "family_to_csv",
    "FAMILY_CSV_COLUMNS",
]

log = logging.getLogger(__name__)

FD_STEP = 1e-6
TOUCH_TOL = 0.05  # |phi| below which a local extremum counts as a touchdown candidate
CROSSING_SWITCH = 5.5
BOOTSTRAP_STEP = 1e-2
FAMILY_CSV_COLUMNS = ("phidot_i", "lambda0", "lambda1", "lambda2", "eta_f_over_pi", "area_over_pi", "phi_max")


def crossing_rule(phidot_i):
    """Which zero crossing ends the optimal trajectory at this slope."""
    return 1 if phidot_i <= CROSSING_SWITCH else 3


@dataclass
class ExtremalSolution:
    """A converged extremal trajectory and its figures of merit.

    ``area`` is the generalized pulse area in radians, ``energy_metric``
    is ``E T / pi**2`` under the constant-amplitude parametrization, i.e.
    ``(area / pi)**2``, and ``a2_over_T`` is the time-average of the
    excited-state population under the same parametrization.
    """

    phidot_i: float
    lam: LagrangeMultipliers
    eta_f: float
    crossing_index: int
    area: float
    phi_max: float
    a2_over_T: float
    energy_metric: float
    traj: TrajectorySolution = field(repr=False)
    xi_f: tuple = (0.0, 0.0, 0.0)
    phi_f: float = 0.0
    residual_norm: float = 0.0
    iterations: int = 0
    mode: str = "crossing"

    @property
    def area_over_pi(self):
        return self.area / math.pi

    @property
    def eta_f_over_pi(self):
        return self.eta_f / math.pi

    @property
    def branch(self):
        return initial_direction(self.lam, self.phidot_i)

    @property
    def theta_f(self):
        return -self.xi_f[0]

    @property
    def o2(self):
        """Second-order error term; equals ``xi1**2 + xi2**2`` at the endpoint."""
        return self.xi_f[1] ** 2 + self.xi_f[2] ** 2

    def mirrored(self):
        """Same solution with ``phi -> -phi``: the other sign of the target state.

        Areas, energies, losses and ``phi_max`` are unchanged; multipliers,
        ``phidot_i`` and the constraint integrals flip sign.
        """
        lam = -self.lam
        traj = integrate(lam, -self.phidot_i, eta_max=self.eta_f * 1.5 + 1.0, area_max=self.area, on_singular="raise")
        return replace(
            self,
            phidot_i=-self.phidot_i,
            lam=lam,
            traj=traj,
            xi_f=tuple(-x for x in self.xi_f),
            phi_f=-self.phi_f,
        )

    def to_record(self):
        return {
            "phidot_i": self.phidot_i,
            "lambda0": self.lam.lambda0,
            "lambda1": self.lam.lambda1,
            "lambda2": self.lam.lambda2,
            "eta_f": self.eta_f,
            "eta_f_over_pi": self.eta_f_over_pi,
            "crossing_index": self.crossing_index,
            "area": self.area,
            "area_over_pi": self.area_over_pi,
            "energy_metric": self.energy_metric,
            "a2_over_T": self.a2_over_T,
            "phi_max": self.phi_max,
            "theta_f": self.theta_f,
            "o2": self.o2,
            "residual_norm": self.residual_norm,
            "mode": self.mode,
        }


# ---------------------------------------------------------------------------
# residual evaluation


def _touchdowns(traj, tol):
    """Extrema where phi comes back to (near) zero from the side it left on."""
    branch = traj.branch
    kind = "min" if branch > 0 else "max"
    out = []
    for e in traj.extrema:
        if e.kind != kind or abs(e.phi) >= tol or e.eta < 1e-3:
            continue
        # a pair of detected crossings around the extremum is a real dip, not a touch
        if any(abs(c - e.eta) < 1e-3 for c in traj.zero_crossings):
            continue
        out.append(e)
    return out


def _state_at_extremum(traj, e):
    if traj.route == "area":
        return traj.state_at_area(e.area)
    return traj.state_at_eta(e.eta)


def terminal_points(traj, touch_tol=1e-6):
    """Zero crossings and tangential touchdowns in order of increasing eta."""
    points = [(float(st[0]), st) for st in traj.crossing_states]
    points += [(e.eta, _state_at_extremum(traj, e)) for e in _touchdowns(traj, touch_tol)]
    points.sort(key=lambda p: p[0])
    return [st for _, st in points]


def residuals(lam, phidot_i, crossing_index, eta_max=3 * math.pi):
    """Constraint residuals at the ``crossing_index``-th return of phi to zero.

    Returns ``(xi0 - branch*pi/2, xi1, xi2)``. With the multipliers signed
    so that phi starts downward (``branch = -1``) the first entry is
    ``xi0 + pi/2``. Tangential touchdowns count as crossings.
    """
    if not isinstance(lam, LagrangeMultipliers):
        lam = LagrangeMultipliers.from_array(lam)
    branch = initial_direction(lam, phidot_i)
    if branch == 0.0:
        raise InsufficientCrossings("null trajectory never leaves phi = 0")
    traj = integrate(lam, phidot_i, eta_max, on_singular="truncate")
    points = terminal_points(traj)
    if len(points) < crossing_index:
        raise InsufficientCrossings(
            f"requested crossing {crossing_index}, found {len(points)} before eta={traj.eta_end:.6g}"
        )
    st = points[crossing_index - 1]
    return np.array([st[3] - branch * math.pi / 2, st[4], st[5]])


def _regular_events():
    guard = lambda s, y, *a: GUARD_PHI - abs(y[0])
    guard.terminal = True
    reversal = lambda s, y, *a: math.cos(y[2])
    reversal.terminal = True
    return [guard, reversal]


def _shoot(lam, phidot_i, area, extremum_event=False):
    """Integrate the area-route system to ``area``; return the solve_ivp result."""
    events = _regular_events()
    if extremum_event:
        d0 = initial_direction(lam, phidot_i)
        start = math.atan(phidot_i) or d0
        ext = lambda s, y, *a: y[2] if s > 0 else start
        events.append(ext)
    sol = solve_ivp(
        _area_rhs, (0.0, area), [0.0, 0.0, math.atan(phidot_i), 0.0, 0.0, 0.0, 0.0],
        method="DOP853", args=tuple(lam), rtol=RTOL, atol=ATOL, events=events,
    )
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.status == 1:
        raise SingularTrajectory("trajectory left the regular domain before the terminal point")
    return sol


class _CrossingProblem:
    """Square system F(lambda, A) = (phi, xi0 - target, xi1, xi2) at area A."""

    def __init__(self, phidot_i, branch):
        self.phidot_i = phidot_i
        self.target = branch * math.pi / 2

    def __call__(self, x):
        if x[3] <= 0:
            raise SingularTrajectory("terminal area must be positive")
        sol = _shoot(x[:3], self.phidot_i, x[3])
        y = sol.y[:, -1]
        return np.array([y[0], y[3] - self.target, y[4], y[5]])

    def jacobian(self, x, f0):
        J = np.empty((4, 4))
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[j] += FD_STEP
            xm[j] -= FD_STEP
            J[:, j] = (self(xp) - self(xm)) / (2 * FD_STEP)
        y = _shoot(x[:3], self.phidot_i, x[3]).y[:, -1]
        d = _area_rhs(x[3], y, *x[:3])
        J[:, 3] = [d[0], d[3], d[4], d[5]]
        return J


class _TouchProblem:
    """Over-determined F(lambda) = (phi_min, xi0 - target, xi1, xi2) at a touchdown."""

    def __init__(self, phidot_i, branch, area_hint):
        self.phidot_i = phidot_i
        self.branch = branch
        self.target = branch * math.pi / 2
        self.area_hint = area_hint

    def locate(self, lam):
        sol = _shoot(lam, self.phidot_i, self.area_hint * 1.15 + 0.5, extremum_event=True)
        # local minima (maxima for the mirrored branch) of phi, excluding the start
        cands = [
            (s, y) for s, y in zip(sol.t_events[2], sol.y_events[2])
            if s > 1e-3 and self.branch * y[0] < TOUCH_TOL
            and self.branch * _area_rhs(s, y, *lam)[2] > 0
        ]
        if not cands:
            raise InsufficientCrossings("no touchdown near the expected terminal point")
        return min(cands, key=lambda c: abs(c[0] - self.area_hint))

    def __call__(self, x):
        s, y = self.locate(x)
        return np.array([y[0], y[3] - self.target, y[4], y[5]])

    def jacobian(self, x, f0):
        J = np.empty((4, 3))
        for j in range(3):
            xp, xm = x.copy(), x.copy()
            xp[j] += FD_STEP
            xm[j] -= FD_STEP
            J[:, j] = (self(xp) - self(xm)) / (2 * FD_STEP)
        return J


def _safe_eval(problem, x):
    try:
        f = problem(x)
    except (TrajectoryError, ValueError):
        return None
    return f if np.all(np.isfinite(f)) else None


def _newton(problem, x0, tol, max_iter, phidot_i):
    """Damped Gauss-Newton with a Levenberg-Marquardt fallback.

    Every accepted step strictly lowers the residual infinity norm; a step
    that does not is halved up to 8 times before LM damping is tried.
    """
    x = np.asarray(x0, dtype=float)
    f = _safe_eval(problem, x)
    if f is None:
        raise NoConvergence("initial guess does not produce a regular trajectory", phidot_i)
    norm = np.max(np.abs(f))
    for it in range(1, max_iter + 1):
        if norm < tol:
            return x, f, it - 1
        J = problem.jacobian(x, f)
        steps = []
        try:
            if J.shape[0] == J.shape[1]:
                if np.linalg.cond(J) > 1e13:
                    raise np.linalg.LinAlgError("ill-conditioned")
                steps.append(np.linalg.solve(J, -f))
            else:
                steps.append(np.linalg.lstsq(J, -f, rcond=None)[0])
        except np.linalg.LinAlgError:
            log.debug("singular Jacobian at phidot_i=%g, switching to LM", phidot_i)

        accepted = False
        for dx in steps:
            t = 1.0
            for _ in range(9):
                fn = _safe_eval(problem, x + t * dx)
                if fn is not None and np.max(np.abs(fn)) < norm:
                    x, f = x + t * dx, fn
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            JtJ = J.T @ J
            mu = 1e-3 * max(np.max(np.diag(JtJ)), 1e-12)
            for _ in range(12):
                try:
                    dx = np.linalg.solve(JtJ + mu * np.eye(len(x)), -J.T @ f)
                except np.linalg.LinAlgError:
                    mu *= 10
                    continue
                fn = _safe_eval(problem, x + dx)
                if fn is not None and np.max(np.abs(fn)) < norm:
                    x, f = x + dx, fn
                    accepted = True
                    break
                mu *= 10
        if not accepted:
            if not steps:
                raise SingularJacobian(f"singular Jacobian and no descent step at phidot_i={phidot_i}", phidot_i)
            # stagnation at the integrator noise floor still counts if tight enough
            if norm < 1e-8:
                return x, f, it
            raise NoConvergence(f"no descent step (residual {norm:.3e}) at phidot_i={phidot_i}", phidot_i)
        new_norm = np.max(np.abs(f))
        if new_norm > 0.5 * norm and new_norm < 1e-8:
            return x, f, it
        norm = new_norm
    if norm < tol:
        return x, f, max_iter
    raise NoConvergence(f"residual {norm:.3e} after {max_iter} iterations at phidot_i={phidot_i}", phidot_i)


# ---------------------------------------------------------------------------
# solving


def _initial_area(lam, phidot_i, crossing_index, eta_hint):
    """Partial area of the terminal point suggested by the guess trajectory."""
    probe = integrate(lam, phidot_i, eta_max=4 * math.pi, on_singular="truncate")
    branch = probe.branch
    crossings = list(probe.crossing_states)
    touches = [_state_at_extremum(probe, e) for e in _touchdowns(probe, TOUCH_TOL)]
    if isinstance(crossing_index, int):
        if len(crossings) >= crossing_index:
            return float(crossings[crossing_index - 1][6])
        cands = crossings + touches
        cands.sort(key=lambda st: st[0])
        if len(cands) >= crossing_index:
            return float(cands[crossing_index - 1][6])
        raise InsufficientCrossings(f"guess trajectory has no terminal point number {crossing_index}")
    cands = crossings + touches
    if not cands:
        raise InsufficientCrossings("guess trajectory never returns to phi = 0")
    if eta_hint is not None:
        best = min(cands, key=lambda st: abs(st[0] - eta_hint))
    else:
        best = min(cands, key=lambda st: abs(st[3] - branch * math.pi / 2) + abs(st[4]) + abs(st[5]))
    return float(best[6])


def _finish(lam, phidot_i, area, mode, f, iterations):
    """Integrate the converged trajectory and fill in the metrics."""
    probe = integrate(lam, phidot_i, eta_max=8 * math.pi, area_max=area * (1 + 1e-6) + 1e-6, on_singular="raise")
    if mode == "crossing":
        near = [st for st in probe.crossing_states if abs(st[6] - area) < 1e-5]
        if not near:
            raise NoConvergence(f"converged point is not a zero crossing at phidot_i={phidot_i}", phidot_i)
        st = near[-1]
        if st[2] * probe.branch > 0:
            # a return from the far side of zero belongs to another family
            raise NoConvergence(f"terminal crossing runs the wrong way at phidot_i={phidot_i}", phidot_i)
        area = float(st[6])
        index = 1 + sum(1 for c in probe.crossing_states if c[6] < area - 1e-9)
    else:
        index = 1 + sum(1 for c in probe.crossing_states if c[6] < area - 1e-3)
    traj = integrate(lam, phidot_i, eta_max=8 * math.pi, area_max=area, on_singular="raise")
    end = traj.state_at_area(area)
    extreme = [abs(e.phi) for e in traj.extrema if e.area <= area]
    phi_max = max([float(np.max(np.abs(traj.phi)))] + extreme)
    return ExtremalSolution(
        phidot_i=float(phidot_i),
        lam=lam,
        eta_f=float(end[0]),
        crossing_index=index,
        area=area,
        phi_max=phi_max,
        a2_over_T=float(end[7]) / area,
        energy_metric=(area / math.pi) ** 2,
        traj=traj,
        xi_f=(float(end[3]), float(end[4]), float(end[5])),
        phi_f=float(end[1]),
        residual_norm=float(np.max(np.abs(f))),
        iterations=iterations,
        mode=mode,
    )


def solve_extremum(phidot_i, guess, crossing_index=None, *, tol=1e-10, max_iter=100, area_guess=None):
    """Converge the extremal trajectory for one initial slope.

    Parameters
    ----------
    phidot_i : float
        Initial slope; ``0`` selects the tangential-touchdown formulation.
    guess : LagrangeMultipliers, Seed, ExtremalSolution or 3-sequence
        Starting multipliers. A seed's ``eta_f`` is used to pick the
        terminal point of the guess trajectory when ``crossing_index`` is
        not given.
    crossing_index : int or None
        Required index of the terminal crossing; ``None`` (or ``"auto"``)
        accepts whatever the converged point turns out to be.
    area_guess : float, optional
        Terminal partial area to start from (used by continuation).

    Raises
    ------
    NoConvergence
        No convergence within ``max_iter`` iterations, or the converged
        point is not the requested crossing.
    SingularJacobian
        Neither Newton nor LM steps reduce the residual.
    """
    phidot_i = float(phidot_i)
    if crossing_index == "auto":
        crossing_index = None
    eta_hint = getattr(guess, "eta_f", None)
    if area_guess is None and isinstance(guess, ExtremalSolution):
        area_guess = guess.area
    lam = guess.lam if hasattr(guess, "lam") else guess
    if not isinstance(lam, LagrangeMultipliers):
        lam = LagrangeMultipliers.from_array(lam)
    branch = initial_direction(lam, phidot_i)
    if branch == 0.0:
        raise NoConvergence("null multipliers with zero slope give the trivial trajectory", phidot_i)

    try:
        if area_guess is None:
            area_guess = _initial_area(lam, phidot_i, crossing_index, eta_hint)
    except TrajectoryError as exc:
        raise NoConvergence(str(exc), phidot_i) from exc

    if phidot_i == 0.0:
        problem = _TouchProblem(phidot_i, branch, area_guess)
        x, f, its = _newton(problem, lam.as_array(), tol, max_iter, phidot_i)
        lam = LagrangeMultipliers.from_array(x)
        area, _ = problem.locate(x)
        sol = _finish(lam, phidot_i, float(area), "touch", f, its)
    else:
        problem = _CrossingProblem(phidot_i, branch)
        x0 = np.append(lam.as_array(), area_guess)
        x, f, its = _newton(problem, x0, tol, max_iter, phidot_i)
        sol = _finish(LagrangeMultipliers.from_array(x), phidot_i, float(x[3]), "crossing", f, its)

    if crossing_index is not None and sol.crossing_index != crossing_index:
        raise NoConvergence(
            f"converged onto crossing {sol.crossing_index}, not the requested {crossing_index}", phidot_i
        )
    return sol


# ---------------------------------------------------------------------------
# family continuation


def _predict(prev, prev2, p):
    """Secant predictor in (lambda, A) from the last two solutions."""
    x1 = np.append(prev.lam.as_array(), prev.area)
    if prev2 is None or prev2.phidot_i == prev.phidot_i:
        return x1
    x2 = np.append(prev2.lam.as_array(), prev2.area)
    r = (p - prev.phidot_i) / (prev.phidot_i - prev2.phidot_i)
    return x1 + r * (x1 - x2)


def _continue_to(p, prev, prev2, rule, max_halvings):
    """Walk from ``prev`` to slope ``p``, halving the step on failure."""
    step = p - prev.phidot_i
    if prev.mode == "touch" and abs(step) > BOOTSTRAP_STEP:
        # leaving the tangential point needs a small first step
        step = math.copysign(BOOTSTRAP_STEP, step)
    halvings = 0
    last_error = None
    while True:
        target = prev.phidot_i + step
        if (step > 0 and target > p) or (step < 0 and target < p):
            target = p
        x = _predict(prev, prev2, target)
        if prev.mode == "touch":
            # the crossing sits before the touchdown by about slope / curvature in eta
            kappa = abs(el_rhs(prev.eta_f, 0.0, 0.0, prev.lam))
            x[3] -= 2.0 * abs(target - prev.phidot_i) / max(kappa, 1e-6)
        try:
            sol = solve_extremum(
                target, LagrangeMultipliers.from_array(x[:3]), rule(target), area_guess=float(x[3])
            )
        except NoConvergence as exc:
            last_error = exc
            halvings += 1
            if halvings > max_halvings:
                raise NoConvergence(f"continuation failed at phidot_i={p}: {last_error}", p) from exc
            step /= 2
            continue
        if target == p:
            return sol, prev
        prev2, prev = prev, sol


def sweep_family(phidot_grid, seed, *, rule=crossing_rule, max_halvings=6):
    """Trace the optimal family over ``phidot_grid`` starting from ``seed``.

    Points above the seed's slope are visited upward and points below it
    downward, each solve seeded by a secant prediction from the previous
    two solutions. A failed step is halved up to ``max_halvings`` times
    before :class:`NoConvergence` is raised with the offending grid point.
    Returns solutions sorted by ``phidot_i``.
    """
    grid = sorted({float(p) for p in phidot_grid})
    if any(p < 0 or p > 250 for p in grid):
        raise ValueError("phidot grid must lie in [0, 250]")
    out = {}
    if seed.phidot_i in grid:
        out[seed.phidot_i] = seed
    for direction in (1, -1):
        todo = [p for p in grid if (p - seed.phidot_i) * direction > 0]
        todo.sort(key=lambda p: abs(p - seed.phidot_i))
        prev, prev2 = seed, None
        for p in todo:
            sol, before = _continue_to(p, prev, prev2, rule, max_halvings)
            out[p] = sol
            prev2, prev = before, sol
            log.info("phidot_i=%g area/pi=%.6f crossing=%d", p, sol.area_over_pi, sol.crossing_index)
    return [out[p] for p in grid]


def default_grid(lo=0.0, hi=16.0, n=65):
    """Log-spaced points near ``lo`` (where the family varies fast) plus a linear tail."""
    if n < 3:
        return np.linspace(lo, hi, n)
    n_log = n // 2
    knee = min(1.0, hi)
    log_part = np.geomspace(1e-3, knee, n_log) if lo == 0 else np.geomspace(max(lo, 1e-3), knee, n_log)
    lin_part = np.linspace(knee, hi, n - n_log)
    grid = np.concatenate([[lo] if lo == 0 else [], log_part, lin_part])
    return np.unique(grid)[: n if lo != 0 else n + 1]


def parse_grid(text):
    """``"lo:hi:n"`` -> ``n`` uniformly spaced points."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ValueError(f"grid must look like lo:hi:n, got {text!r}") from exc
    if n < 1 or hi < lo:
        raise ValueError(f"invalid grid {text!r}")
    return np.linspace(lo, hi, n)


def family_to_json(family, path):
    return write_json(path, [sol.to_record() for sol in family])


def family_to_csv(family, path):
    recs = [sol.to_record() for sol in family]
    return write_csv(path, list(FAMILY_CSV_COLUMNS), [[r[c] for r in recs] for c in FAMILY_CSV_COLUMNS])
