"""Mobility and energy metrics over simulated trajectories.

Average speed variation (ASV) measures how far a vehicle's speed strays from
a reference speed over a time window. Fuel consumption uses a log-polynomial
regression in instantaneous speed and acceleration with separate coefficient
matrices for the acceleration and deceleration regimes; the coefficient table
ships as a data file whose header declares its unit convention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DomainError
from .simulator import Scenario, Trajectory

__all__ = [
    "FuelCoefficients",
    "MetricsReport",
    "load_fuel_coefficients",
    "default_fuel_coefficients",
    "asv",
    "fuel_rate",
    "log_fuel_exponents",
    "total_fuel",
    "summarize",
    "write_metrics_csv",
]

# exponent cap: beyond this the regression is far outside its fitted range,
# so the rate saturates and the report flags it
_MAX_EXPONENT = 80.0

# accelerations below rounding noise must not flip the regime choice, since
# the two matrices disagree slightly at a = 0
_ACCEL_DEADBAND = 1e-10

_UNIT_SCALES = {
    # speed multiplier, acceleration multiplier (from m/s and m/s^2)
    "kmh": (3.6, 3.6),
    "ms": (1.0, 1.0),
}


@dataclass(frozen=True)
class FuelCoefficients:
    """4x4 log-rate coefficient matrices for each acceleration regime.

    `units` declares the speed/acceleration convention the matrices were
    fitted in: "kmh" (km/h and km/h/s) or "ms" (m/s and m/s^2). Rates are
    liters per second before the milliliter conversion in `fuel_rate`.
    """

    k_accel: np.ndarray
    k_decel: np.ndarray
    units: str = "kmh"

    def __post_init__(self):
        for name in ("k_accel", "k_decel"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape != (4, 4) or not np.isfinite(mat).all():
                raise DomainError(f"{name} must be a finite 4x4 matrix")
            object.__setattr__(self, name, mat)
        if self.units not in _UNIT_SCALES:
            raise DomainError(
                f"unknown unit convention {self.units!r}; known: "
                f"{sorted(_UNIT_SCALES)}"
            )


def load_fuel_coefficients(path) -> FuelCoefficients:
    """Parse a coefficient file: a units header plus two labelled 4x4 blocks."""
    units = None
    blocks: dict[str, list[list[float]]] = {}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("units:"):
                units = line.split(":", 1)[1].strip()
            elif line.startswith("regimes:"):
                continue
            elif line.startswith("regime:"):
                current = line.split(":", 1)[1].strip()
                blocks[current] = []
            else:
                if current is None:
                    raise DomainError(f"coefficient row before any regime: {line!r}")
                blocks[current].append([float(tok) for tok in line.split()])
    if units is None or set(blocks) != {"accel", "decel"}:
        raise DomainError(
            "coefficient file must declare units and both accel/decel regimes"
        )
    return FuelCoefficients(
        k_accel=np.array(blocks["accel"]),
        k_decel=np.array(blocks["decel"]),
        units=units,
    )


def default_fuel_coefficients() -> FuelCoefficients:
    """The bundled composite-vehicle coefficient table."""
    ref = resources.files("platoonsim").joinpath("data/vt_micro_fuel.txt")
    with resources.as_file(ref) as path:
        return load_fuel_coefficients(path)


def asv(
    traj: Trajectory, vehicle: int, v_star: float, window: tuple[float, float]
) -> float:
    """Time-averaged absolute deviation of one vehicle's speed from v_star."""
    t1, t2 = window
    mask = traj.window_mask(t1, t2)
    t = traj.t[mask]
    dev = np.abs(traj.v[mask, vehicle] - v_star)
    return float(np.trapezoid(dev, t) / (t2 - t1))


def log_fuel_exponents(v, a, coeffs: FuelCoefficients):
    """Exponents of the fuel model for speed/accel arrays in m/s, m/s^2."""
    sv, sa = _UNIT_SCALES[coeffs.units]
    v = np.asarray(v, dtype=float) * sv
    a = np.asarray(a, dtype=float) * sa
    a = np.where(np.abs(a) < _ACCEL_DEADBAND, 0.0, a)
    vp = np.stack([np.ones_like(v), v, v**2, v**3], axis=-1)
    ap = np.stack([np.ones_like(a), a, a**2, a**3], axis=-1)
    expo_acc = np.einsum("...i,ij,...j->...", vp, coeffs.k_accel, ap)
    expo_dec = np.einsum("...i,ij,...j->...", vp, coeffs.k_decel, ap)
    return np.where(a >= 0, expo_acc, expo_dec)


def fuel_rate(v: float, a: float, coeffs: FuelCoefficients) -> float:
    """Instantaneous fuel rate in ml/s for speed v (m/s) and accel a (m/s^2).

    Exponents above the saturation cap are clamped; `summarize` flags any run
    where that happened.
    """
    if not (math.isfinite(v) and math.isfinite(a)):
        raise DomainError("fuel_rate requires finite speed and acceleration")
    if v < 0:
        raise DomainError(f"speed must be non-negative, got {v}")
    expo = log_fuel_exponents(v, a, coeffs)
    return float(np.exp(np.minimum(expo, _MAX_EXPONENT))) * 1e3


def _rate_series(traj: Trajectory, vehicle: int, mask, coeffs: FuelCoefficients):
    expo = log_fuel_exponents(traj.v[mask, vehicle], traj.a[mask, vehicle], coeffs)
    saturated = bool((expo > _MAX_EXPONENT).any())
    return np.exp(np.minimum(expo, _MAX_EXPONENT)) * 1e3, saturated


def total_fuel(
    traj: Trajectory,
    vehicle: int,
    window: tuple[float, float],
    coeffs: FuelCoefficients,
) -> float:
    """Fuel consumed (ml) by one vehicle over the window."""
    t1, t2 = window
    if t2 <= t1:
        return 0.0
    mask = traj.window_mask(t1, t2)
    rates, _ = _rate_series(traj, vehicle, mask, coeffs)
    return float(np.trapezoid(rates, traj.t[mask]))


@dataclass(frozen=True)
class MetricsReport:
    """Per-follower and platoon-aggregated metrics over one window."""

    per_vehicle_asv: dict[int, float]
    per_vehicle_fc: dict[int, float]
    platoon_asv: float
    platoon_fc: float
    window: tuple[float, float]
    v_star: float
    saturated: bool = False


def summarize(
    traj: Trajectory, scenario: Scenario, coeffs: FuelCoefficients | None = None
) -> MetricsReport:
    """ASV and fuel for every follower plus platoon averages.

    The leader is excluded; the reference speed defaults to the scenario's
    initial lead speed.
    """
    if coeffs is None:
        coeffs = default_fuel_coefficients()
    window = scenario.metric_window
    v_star = scenario.v_star
    mask = traj.window_mask(*window)
    asv_per: dict[int, float] = {}
    fc_per: dict[int, float] = {}
    saturated = False
    for i in traj.follower_indices:
        asv_per[i] = asv(traj, i, v_star, window)
        rates, sat = _rate_series(traj, i, mask, coeffs)
        fc_per[i] = float(np.trapezoid(rates, traj.t[mask]))
        saturated = saturated or sat
    return MetricsReport(
        per_vehicle_asv=asv_per,
        per_vehicle_fc=fc_per,
        platoon_asv=float(np.mean(list(asv_per.values()))),
        platoon_fc=float(np.mean(list(fc_per.values()))),
        window=window,
        v_star=v_star,
        saturated=saturated,
    )


def write_metrics_csv(report: MetricsReport, path) -> None:
    """Export per-vehicle rows plus a platoon aggregate row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle", "asv", "fc"])
        for i in sorted(report.per_vehicle_asv):
            writer.writerow(
                [i, f"{report.per_vehicle_asv[i]:.6f}", f"{report.per_vehicle_fc[i]:.6f}"]
            )
        writer.writerow(
            ["platoon", f"{report.platoon_asv:.6f}", f"{report.platoon_fc:.6f}"]
        )
