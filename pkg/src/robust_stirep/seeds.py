"""Published extremal parameters used as solver seeds and regression targets.

Four highlighted solutions (initial slopes 0, 0.4, 16, 250) plus the
non-robust cos/sin optimum. Digits are copied verbatim from the published
table; widths are fractions, not percent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .trajectory import LagrangeMultipliers

__all__ = ["Seed", "TABULATED", "REFERENCE_COLUMN", "seed_for", "load_seed_file", "column_key"]


@dataclass(frozen=True)
class Seed:
    phidot_i: float
    lam: LagrangeMultipliers
    eta_f: float | None = None
    crossing_index: int | None = None
    area_over_pi: float | None = None
    energy_metric: float | None = None
    a2_over_T: float | None = None
    width_uhf: float | None = None


TABULATED = {
    0.0: Seed(0.0, LagrangeMultipliers(0.1930790914, -0.0838224029, 0.0102504990), 2.9225 * math.pi, 1,
              5.7498, 33.0599, 0.0371, 0.064),
    0.4: Seed(0.4, LagrangeMultipliers(0.14013, -0.04747, 0.22984), 2.1297 * math.pi, 1,
              4.1904, 17.5597, 0.0596, 0.056),
    16.0: Seed(16.0, LagrangeMultipliers(-0.52403, 0.86793, 1.05836), 1.5627 * math.pi, 3,
               3.4615, 11.9819, 0.1256, 0.051),
    250.0: Seed(250.0, LagrangeMultipliers(-0.56596, 0.93853, 1.08283), 1.5454 * math.pi, 3,
                3.4603, 11.9739, 0.1291, 0.051),
}

# non-robust cos/sin optimum
REFERENCE_COLUMN = {"area_over_pi": 1.7321, "energy_metric": 3.0, "a2_over_T": 0.3750, "width_uhf": 0.004}


def column_key(phidot_i):
    """Short label such as ``phidot250`` used by the table report."""
    return "phidot" + format(float(phidot_i), "g")


def seed_for(phidot_i):
    """Closest built-in seed (in log-ish distance) to ``phidot_i``."""
    x = float(phidot_i)
    return min(TABULATED.values(), key=lambda s: abs(math.asinh(s.phidot_i) - math.asinh(x)))


def load_seed_file(path):
    """Read a seed from a solution JSON written by ``solve``.

    Accepts either a bare object or a list of objects; the first entry wins.
    Raises ``ValueError`` on malformed content.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read seed file {path}: {exc}") from exc
    if isinstance(data, list):
        if not data:
            raise ValueError(f"seed file {path} holds an empty list")
        data = data[0]
    try:
        lam = LagrangeMultipliers(float(data["lambda0"]), float(data["lambda1"]), float(data["lambda2"]))
        phidot = float(data["phidot_i"])
        eta_f = data.get("eta_f")
        if eta_f is None and "eta_f_over_pi" in data:
            eta_f = float(data["eta_f_over_pi"]) * math.pi
        crossing = data.get("crossing_index")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed seed file {path}: {exc}") from exc
    return Seed(phidot, lam, None if eta_f is None else float(eta_f), None if crossing is None else int(crossing))
