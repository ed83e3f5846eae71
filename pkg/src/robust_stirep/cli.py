"""Command-line front end.

Exit codes: 0 success, 1 configuration or I/O error, 2 no convergence,
3 a reproduced value or check outside tolerance.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .errors import NoConvergence
from .seeds import REFERENCE_COLUMN, TABULATED, column_key, load_seed_file, seed_for
from .solver import (
    crossing_rule,
    default_grid,
    family_to_csv,
    family_to_json,
    parse_grid,
    solve_extremum,
    sweep_family,
)
from .synthesis import (
    angles_to_csv,
    metrics,
    metrics_to_json,
    pulses_to_csv,
    reference_cos_sin,
    synthesize,
    time_parametrize,
)
from .tdse import (
    N_STEPS,
    QuantumState,
    angles_from_pulses,
    populations_history,
    populations_to_csv,
    profile_to_csv,
    propagate,
    robustness_profile,
)
from .verification import reports_to_jsonl, run_all

log = logging.getLogger("robust_stirep")

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_TOLERANCE = 0, 1, 2, 3
TABLE_EPS_GRID = np.linspace(-0.2, 0.2, 81)


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit code 2 is reserved for no convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    phidot_i: float | None = None
    grid: str | None = None
    crossing: str = "auto"
    T: float = 1.0
    gamma: float = 0.0
    eps: float = 0.0
    eps_range: str = "-0.2:0.2:401"
    out: str = "out"
    jobs: int = 0
    tolerance: float = 1e-3
    seed_file: str | None = None
    only: str | None = None
    pulse: str = "robust"
    n_time: int = 4096
    n_steps: int = N_STEPS

    def validate(self):
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if abs(self.eps) > 0.5:
            raise ConfigError("|eps| must not exceed 0.5")
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if self.jobs < 0:
            raise ConfigError("jobs must be non-negative")
        if self.n_time < 3 or self.n_steps < 1:
            raise ConfigError("n_time must be at least 3 and n_steps at least 1")
        if self.phidot_i is not None and not 0 <= self.phidot_i <= 250:
            raise ConfigError("phidot_i must lie in [0, 250]")
        if self.crossing not in ("1", "3", "auto"):
            raise ConfigError("crossing must be 1, 3 or auto")
        if self.pulse not in ("robust", "reference"):
            raise ConfigError("pulse must be robust or reference")
        if self.seed_file is not None and not Path(self.seed_file).is_file():
            raise ConfigError(f"seed file {self.seed_file} does not exist")
        for text in (self.grid, self.eps_range):
            if text is not None:
                try:
                    parse_grid(text)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        return self

    @property
    def workers(self):
        return self.jobs or os.cpu_count() or 1

    @property
    def crossing_index(self):
        return None if self.crossing == "auto" else int(self.crossing)


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string("[run]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def build_config(args):
    """Merge defaults < config file < command-line flags."""
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key not in known or key == "command":
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = raw
    for key in known:
        v = getattr(args, key, None)
        if v is not None and key != "command":
            values[key] = v
    cfg = RunConfig(command=args.command)
    for key, raw in values.items():
        current = getattr(cfg, key)
        kind = type(current) if current is not None else (float if key == "phidot_i" else str)
        try:
            setattr(cfg, key, kind(raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# helpers


def _tag(phidot_i):
    return column_key(phidot_i)


def _seed_solution(cfg):
    """Converged solution for ``cfg.phidot_i`` from a seed file or the built-in seeds."""
    target = cfg.phidot_i
    if cfg.seed_file:
        seed = load_seed_file(cfg.seed_file)
    else:
        seed = seed_for(target)
    base = solve_extremum(seed.phidot_i, seed, seed.crossing_index)
    if target != seed.phidot_i:
        base = sweep_family([target], base)[0]
    wanted = cfg.crossing_index
    if wanted is not None and base.crossing_index != wanted:
        raise NoConvergence(
            f"no optimal solution ends at crossing {wanted} for phidot_i={target:g} "
            f"(the family ends at crossing {base.crossing_index})",
            target,
        )
    return base


def _pulses(cfg):
    if cfg.pulse == "reference":
        return reference_cos_sin(cfg.T, cfg.n_time), None
    if cfg.phidot_i is None:
        raise ConfigError("--phidot-i is required for robust pulses")
    sol = _seed_solution(cfg)
    return synthesize(sol, cfg.T, cfg.n_time), sol


def _out(cfg):
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _meta(cfg, out, **info):
    io.write_meta(out / f"{cfg.command}.meta.json", config={f.name: getattr(cfg, f.name) for f in fields(cfg)}, **info)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg):
    if cfg.phidot_i is None:
        raise ConfigError("--phidot-i is required")
    sol = _seed_solution(cfg)
    out = _out(cfg)
    tag = _tag(cfg.phidot_i)
    io.write_json(out / f"solution_{tag}.json", sol.to_record())
    sol.traj.to_csv(out / f"trajectory_{tag}.csv")
    _meta(cfg, out, files=[f"solution_{tag}.json", f"trajectory_{tag}.csv"])
    print(
        f"phidot_i={sol.phidot_i:g} lambda=({sol.lam.lambda0:.10g}, {sol.lam.lambda1:.10g}, {sol.lam.lambda2:.10g}) "
        f"eta_f/pi={sol.eta_f_over_pi:.6f} area/pi={sol.area_over_pi:.6f} crossing={sol.crossing_index}"
    )
    return EXIT_OK


def cmd_sweep(cfg):
    grid = parse_grid(cfg.grid) if cfg.grid else default_grid()
    if cfg.seed_file:
        seed = load_seed_file(cfg.seed_file)
    else:
        seed = seed_for(float(np.min(grid)))
    start = solve_extremum(seed.phidot_i, seed, seed.crossing_index)
    family = sweep_family(grid, start)
    out = _out(cfg)
    family_to_json(family, out / "family.json")
    family_to_csv(family, out / "family.csv")
    io.write_csv(
        out / "loss_vs_area.csv",
        ["phidot_i", "area_over_pi", "a2_over_T", "energy_metric"],
        [[s.phidot_i for s in family], [s.area_over_pi for s in family],
         [s.a2_over_T for s in family], [s.energy_metric for s in family]],
    )
    _meta(cfg, out, files=["family.json", "family.csv", "loss_vs_area.csv"])
    areas = [s.area_over_pi for s in family]
    print(f"{len(family)} solutions, area/pi in [{min(areas):.6f}, {max(areas):.6f}]")
    return EXIT_OK


def cmd_synthesize(cfg):
    pulses, sol = _pulses(cfg)
    out = _out(cfg)
    tag = "reference" if sol is None else _tag(sol.phidot_i)
    angles = angles_from_pulses(pulses) if sol is None else time_parametrize(sol, cfg.T, cfg.n_time)
    pulses_to_csv(pulses, out / f"pulses_{tag}.csv")
    angles_to_csv(angles, out / f"angles_{tag}.csv")
    extra = {} if sol is None else {"phidot_i": sol.phidot_i, "eta_f_over_pi": sol.eta_f_over_pi}
    metrics_to_json(pulses, angles, out / f"metrics_{tag}.json", **extra)
    _meta(cfg, out, files=[f"pulses_{tag}.csv", f"angles_{tag}.csv", f"metrics_{tag}.json"])
    area, energy, a2 = metrics(pulses, angles)
    print(f"{pulses.label}: area/pi={area / math.pi:.6f} energy_metric={energy:.6f} a2_over_T={a2:.6f}")
    return EXIT_OK


def cmd_simulate(cfg):
    pulses, sol = _pulses(cfg)
    out = _out(cfg)
    tag = "reference" if sol is None else _tag(sol.phidot_i)
    hist = populations_history(pulses, cfg.eps, cfg.gamma, n_steps=cfg.n_time)
    final = propagate(pulses, cfg.eps, cfg.gamma, n_steps=cfg.n_steps)
    populations_to_csv(hist, out / f"populations_{tag}.csv")
    record = {"label": pulses.label, "eps": cfg.eps, "gamma": cfg.gamma, "T": cfg.T,
              "p1": final.populations[0], "p2": final.populations[1], "p3": final.populations[2],
              "norm": final.norm}
    io.write_json(out / f"final_state_{tag}.json", record)
    _meta(cfg, out, files=[f"populations_{tag}.csv", f"final_state_{tag}.json"])
    p = final.populations
    print(f"{pulses.label}: P1={p[0]:.12f} P2={p[1]:.12f} P3={p[2]:.12f} norm={final.norm:.12f}")
    return EXIT_OK


def cmd_profile(cfg):
    pulses, sol = _pulses(cfg)
    out = _out(cfg)
    tag = "reference" if sol is None else _tag(sol.phidot_i)
    prof = robustness_profile(pulses, parse_grid(cfg.eps_range), n_steps=cfg.n_steps, jobs=cfg.workers)
    profile_to_csv(prof, out / f"profile_{tag}.csv")
    io.write_json(out / f"profile_{tag}.json", {
        "label": pulses.label, "width_uhf": prof.width_uhf,
        "width_minus": prof.width_minus, "width_plus": prof.width_plus,
    })
    _meta(cfg, out, files=[f"profile_{tag}.csv", f"profile_{tag}.json"])
    print(f"{pulses.label}: width_uhf={prof.width_uhf:.6f} (-{prof.width_minus:.6f}/+{prof.width_plus:.6f})")
    return EXIT_OK


def _table_rows(cfg):
    """Yield ``(column, quantity, published, computed, kind)`` rows."""
    columns = ["reference"] + [column_key(p) for p in TABULATED]
    if cfg.only:
        if cfg.only not in columns:
            raise ConfigError(f"--only must be one of {', '.join(columns)}")
        columns = [cfg.only]
    for col in columns:
        if col == "reference":
            pulses = reference_cos_sin(1.0, cfg.n_time + 1)
            area, energy, a2 = metrics(pulses, angles_from_pulses(pulses))
            width = robustness_profile(pulses, TABLE_EPS_GRID, n_steps=cfg.n_steps, jobs=cfg.workers).width_uhf
            pub = REFERENCE_COLUMN
            yield col, "area_over_pi", pub["area_over_pi"], area / math.pi, "rel"
            yield col, "energy_metric", pub["energy_metric"], energy, "rel"
            yield col, "a2_over_T", pub["a2_over_T"], a2, "rel"
            yield col, "width_uhf", pub["width_uhf"], width, "width"
            continue
        seed = next(s for p, s in TABULATED.items() if column_key(p) == col)
        sol = solve_extremum(seed.phidot_i, seed, seed.crossing_index)
        width = robustness_profile(synthesize(sol, 1.0, cfg.n_time), TABLE_EPS_GRID,
                                   n_steps=cfg.n_steps, jobs=cfg.workers).width_uhf
        yield col, "area_over_pi", seed.area_over_pi, sol.area_over_pi, "rel"
        yield col, "energy_metric", seed.energy_metric, sol.energy_metric, "rel"
        yield col, "a2_over_T", seed.a2_over_T, sol.a2_over_T, "rel"
        yield col, "eta_f_over_pi", seed.eta_f / math.pi, sol.eta_f_over_pi, "rel"
        yield col, "width_uhf", seed.width_uhf, width, "width"


def cmd_table(cfg):
    rows, ok_all = [], True
    print(f"{'column':<12} {'quantity':<14} {'published':>12} {'computed':>14} {'deviation':>11}  ok")
    for col, qty, pub, got, kind in _table_rows(cfg):
        if kind == "width":
            # widths are published to one decimal in percent: compare absolutely
            dev, tol = abs(got - pub), 10 * cfg.tolerance
        else:
            dev, tol = abs(got - pub) / abs(pub), cfg.tolerance
        ok = dev <= tol
        ok_all &= ok
        rows.append({"column": col, "quantity": qty, "published": pub, "computed": got,
                     "deviation": dev, "tolerance": tol, "ok": ok})
        print(f"{col:<12} {qty:<14} {pub:>12.6g} {got:>14.8g} {dev:>11.3e}  {'yes' if ok else 'NO'}")
    out = _out(cfg)
    io.write_json(out / "table.json", rows)
    _meta(cfg, out, files=["table.json"])
    return EXIT_OK if ok_all else EXIT_TOLERANCE


def cmd_verify(cfg):
    seeds = [load_seed_file(cfg.seed_file)] if cfg.seed_file else list(TABULATED.values())
    family = []
    for seed in seeds:
        try:
            family.append(solve_extremum(seed.phidot_i, seed, seed.crossing_index))
        except NoConvergence as exc:
            log.warning("phidot_i=%g did not converge: %s", seed.phidot_i, exc)
            family.append(seed)
    reports = run_all(family, cfg.T)
    out = _out(cfg)
    reports_to_jsonl(reports, out / "checks.jsonl")
    _meta(cfg, out, files=["checks.jsonl"])
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check_name:<24} {r.measured:.3e} <= {r.tolerance:.1e}  {r.context}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_TOLERANCE


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "table": cmd_table,
    "verify": cmd_verify,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--jobs", type=int, help="worker threads for eps sweeps (default: all CPUs)")
    common.add_argument("--seed-file", dest="seed_file", help="solution JSON to seed from")
    common.add_argument("--T", dest="T", type=float, help="pulse duration (default 1)")
    common.add_argument("--n-time", dest="n_time", type=int, help="time grid intervals (default 4096)")
    common.add_argument("--n-steps", dest="n_steps", type=int, help="propagator steps (default 8192)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="robust-stirep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("solve", "converge one extremal solution")
    p.add_argument("--phidot-i", dest="phidot_i", type=float)
    p.add_argument("--crossing", choices=["1", "3", "auto"])

    p = add("sweep", "trace the optimal family")
    p.add_argument("--grid", help="lo:hi:n (default: 65 log-plus-linear points on [0, 16])")

    for name, text in (("synthesize", "write pulses and angles"), ("simulate", "propagate and write populations"),
                       ("profile", "fidelity against amplitude error")):
        p = add(name, text)
        p.add_argument("--phidot-i", dest="phidot_i", type=float)
        p.add_argument("--crossing", choices=["1", "3", "auto"])
        p.add_argument("--pulse", choices=["robust", "reference"])
        if name == "simulate":
            p.add_argument("--eps", type=float)
            p.add_argument("--gamma", type=float)
        if name == "profile":
            p.add_argument("--eps-range", dest="eps_range", help="lo:hi:n, write as --eps-range=-0.1:0.1:41 (default -0.2:0.2:401)")

    p = add("table", "reproduce the published table")
    p.add_argument("--tolerance", type=float, help="relative tolerance (default 1e-3; widths use 10x absolute)")
    p.add_argument("--only", help="one column: reference, phidot0, phidot0.4, phidot16, phidot250")

    add("verify", "run the cross-check suite")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except NoConvergence as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
