"""Dimensionless forcing and damping of the spin-orbit model from physical data."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from ..errors import SchemaError

SECONDS_PER_YEAR = 365.25 * 86400.0


@dataclass(frozen=True)
class SatelliteData:
    system: str
    primary: str
    satellite: str
    e: float
    omega_T: float  # mean orbital angular velocity, rad/s
    M: float  # satellite mass, g
    M0: float  # primary mass, g
    R: float  # satellite radius, cm
    rho: float  # mean distance, cm
    k2: float
    xi: float
    Q: float
    h2: float

    def __post_init__(self):
        for f in fields(self)[4:]:
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if not 0 <= self.e < 1:
            raise ValueError("e must lie in [0, 1)")

    @property
    def orbital_period(self) -> float:
        return 2.0 * math.pi / self.omega_T


COLUMNS = [f.name for f in fields(SatelliteData)]


def tidal_factor(d: SatelliteData) -> float:
    """(R / rho)**3 (M0 / M), common to both parameters."""
    return (d.R / d.rho) ** 3 * (d.M0 / d.M)


def spin_orbit_params(d: SatelliteData) -> tuple[float, float]:
    """(eps, gamma): eps = 3 h / (2 R) with h = (3/2) h2 R (R/rho)**3 (M0/M),
    gamma = 3 k2 / (xi Q) (R/rho)**3 (M0/M)."""
    f = tidal_factor(d)
    h = 1.5 * d.h2 * d.R * f
    eps = 3.0 * h / (2.0 * d.R)
    gamma = 3.0 * d.k2 / (d.xi * d.Q) * f
    return eps, gamma


def gamma_in_inverse_years(gamma: float, orbital_period_seconds: float) -> float:
    """Damping rate per year, given gamma in units of the rescaled time omega_T t."""
    if not orbital_period_seconds > 0:
        raise ValueError("orbital period must be > 0")
    return gamma * (2.0 * math.pi / orbital_period_seconds) * SECONDS_PER_YEAR


def _parse(text: str, source: str) -> list[SatelliteData]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    header = reader.fieldnames or []
    for col in COLUMNS:
        if col not in header:
            raise SchemaError(f"{source}: missing column {col!r}")
    out = []
    for n, row in enumerate(reader, start=2):
        try:
            vals = {c: (row[c].strip() if c in ("system", "primary", "satellite") else float(row[c]))
                    for c in COLUMNS}
            out.append(SatelliteData(**vals))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{source}: bad row {n}: {exc}") from exc
    return out


def load_satellites(path: Optional[str | Path] = None) -> list[SatelliteData]:
    """Read a satellite table; the shipped one when ``path`` is None."""
    if path is None:
        text = resources.files("basinforge.data").joinpath("satellites.csv").read_text()
        return _parse(text, "satellites.csv")
    return _parse(Path(path).read_text(), str(path))


def parameter_table(rows: list[SatelliteData]) -> list[dict]:
    out = []
    for d in rows:
        eps, gamma = spin_orbit_params(d)
        out.append({
            "system": d.system, "satellite": d.satellite, "e": d.e, "eps": eps, "gamma": gamma,
            "T_s": d.orbital_period,
            "gamma_per_year": gamma_in_inverse_years(gamma, d.orbital_period),
        })
    return out
