"""Car-following acceleration laws for human-driven and automated vehicles.

Two models are provided: a nonlinear intelligent-driver law (used for human
drivers) and a linear constant-time-gap law with relative-speed feedback
(used for automated vehicles). Both map the local state (spacing, relative
speed, own speed) to an acceleration and expose their equilibria and
rational-driving sign properties for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoEquilibriumError

__all__ = [
    "CarFollowingInput",
    "IdmParams",
    "OvrvParams",
    "ModelKind",
    "idm_accel",
    "ovrv_accel",
    "model_accel",
    "equilibrium_spacing",
    "rdc_check",
    "RdcReport",
    "RdcViolation",
]


def _require_finite(**values: float) -> None:
    for name, val in values.items():
        if not math.isfinite(val):
            raise DomainError(f"{name} must be finite, got {val!r}")


@dataclass(frozen=True)
class CarFollowingInput:
    """Local state seen by one vehicle: spacing, relative speed, own speed.

    `dv` is signed as predecessor speed minus own speed, so positive values
    mean the gap is opening.
    """

    s: float
    dv: float
    v: float

    def __post_init__(self):
        _require_finite(s=self.s, dv=self.dv, v=self.v)
        if self.s <= 0:
            raise DomainError(f"spacing must be positive, got {self.s}")
        if self.v < 0:
            raise DomainError(f"speed must be non-negative, got {self.v}")


@dataclass(frozen=True)
class IdmParams:
    """Intelligent-driver parameters.

    a: maximum acceleration (m/s^2); b: comfortable deceleration (m/s^2);
    v0: free-flow speed (m/s); s0: jam spacing (m); T: time headway (s);
    delta: speed exponent; length: vehicle length (m).
    """

    a: float
    b: float
    v0: float
    s0: float
    T: float
    delta: float
    length: float

    def __post_init__(self):
        for name in ("a", "b", "v0", "s0", "T", "delta", "length"):
            val = getattr(self, name)
            _require_finite(**{name: val})
            if val <= 0:
                raise DomainError(f"IdmParams.{name} must be positive, got {val}")


@dataclass(frozen=True)
class OvrvParams:
    """Linear gap-and-relative-speed parameters.

    k1: spacing gain (1/s^2); k2: relative-speed gain (1/s); eta: constant
    spacing offset (m); tau: desired time gap (s); length: vehicle length (m).
    """

    k1: float
    k2: float
    eta: float
    tau: float
    length: float

    def __post_init__(self):
        for name in ("k1", "k2", "eta", "tau", "length"):
            _require_finite(**{name: getattr(self, name)})
        if self.k1 <= 0 or self.k2 <= 0 or self.tau <= 0 or self.length <= 0:
            raise DomainError("OvrvParams k1, k2, tau, length must be positive")
        if self.eta < 0:
            raise DomainError(f"OvrvParams.eta must be non-negative, got {self.eta}")


# One concrete car-following law; dispatch is by parameter type.
ModelKind = Union[IdmParams, OvrvParams]


def idm_desired_spacing(v, dv, p: IdmParams):
    """Speed-dependent desired spacing, floored at the jam spacing term."""
    return p.s0 + np.maximum(0.0, v * p.T - v * dv / (2.0 * math.sqrt(p.a * p.b)))


def idm_accel_arrays(s, dv, v, p: IdmParams):
    """Vectorized intelligent-driver acceleration (no input validation)."""
    sstar = idm_desired_spacing(v, dv, p)
    return p.a * (1.0 - (v / p.v0) ** p.delta - (sstar / s) ** 2)


def ovrv_accel_arrays(s, dv, v, p: OvrvParams):
    """Vectorized linear-law acceleration (no input validation)."""
    return p.k1 * (s - p.eta - p.tau * v) + p.k2 * dv


def idm_accel(inp: CarFollowingInput, p: IdmParams) -> float:
    """Intelligent-driver acceleration for one vehicle state."""
    return float(idm_accel_arrays(inp.s, inp.dv, inp.v, p))


def ovrv_accel(inp: CarFollowingInput, p: OvrvParams) -> float:
    """Linear gap-and-relative-speed acceleration for one vehicle state."""
    return float(ovrv_accel_arrays(inp.s, inp.dv, inp.v, p))


def model_accel(model: ModelKind, s: float, dv: float, v: float) -> float:
    """Acceleration of either model at (s, dv, v), with input validation."""
    inp = CarFollowingInput(s, dv, v)
    if isinstance(model, IdmParams):
        return idm_accel(inp, model)
    if isinstance(model, OvrvParams):
        return ovrv_accel(inp, model)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def equilibrium_spacing(model: ModelKind, v: float) -> float:
    """Spacing at which the model holds speed v behind an equally fast leader.

    Closed forms are used for both models; the nonlinear one is additionally
    refined by bracketing if the closed form leaves a residual acceleration
    above 1e-9 m/s^2 (guards against large speed exponents).
    """
    _require_finite(v=v)
    if v < 0:
        raise DomainError(f"speed must be non-negative, got {v}")
    if isinstance(model, OvrvParams):
        return model.eta + model.tau * v
    if not isinstance(model, IdmParams):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    ratio = (v / model.v0) ** model.delta
    if ratio >= 1.0:
        raise NoEquilibriumError(
            f"no equilibrium spacing at v={v}: at or above free speed {model.v0}"
        )
    s_eq = (model.s0 + v * model.T) / math.sqrt(1.0 - ratio)
    if abs(idm_accel_arrays(s_eq, 0.0, v, model)) > 1e-9:
        # accel is strictly decreasing in s, so a wide bracket is safe
        s_eq = brentq(
            lambda s: idm_accel_arrays(s, 0.0, v, model),
            1e-6,
            max(10.0 * s_eq, 1e3),
            xtol=1e-12,
        )
    return float(s_eq)


@dataclass(frozen=True)
class RdcViolation:
    condition: str
    s: float
    dv: float
    v: float
    value: float


@dataclass(frozen=True)
class RdcReport:
    """Result of the rational-driving sign audit.

    Holds at most one violation (the first found) per partial derivative.
    """

    passed: bool
    violations: tuple[RdcViolation, ...]

    def __bool__(self) -> bool:
        return self.passed


def rdc_check(
    model: ModelKind,
    s_range: tuple[float, float] = (5.0, 100.0),
    dv_range: tuple[float, float] = (-5.0, 5.0),
    v_range: tuple[float, float] = (0.0, 30.0),
    n: int = 15,
    h: float = 1e-4,
    tol: float = 1e-9,
) -> RdcReport:
    """Verify the rational-driving sign conditions on a state grid.

    Central finite differences estimate the partials of acceleration at every
    grid point; the check requires d/ds >= 0, d/ddv >= 0, d/dv <= 0 (within
    `tol`). Sample points are inset by `h` so the stencil stays inside the
    physical box (s > 0, v >= 0).
    """
    s_grid = np.linspace(s_range[0] + h, s_range[1] - h, n)
    dv_grid = np.linspace(dv_range[0] + h, dv_range[1] - h, n)
    v_grid = np.linspace(max(v_range[0], 0.0) + h, v_range[1] - h, n)
    S, D, V = np.meshgrid(s_grid, dv_grid, v_grid, indexing="ij")

    if isinstance(model, IdmParams):
        f = lambda s, dv, v: idm_accel_arrays(s, dv, v, model)  # noqa: E731
    elif isinstance(model, OvrvParams):
        f = lambda s, dv, v: ovrv_accel_arrays(s, dv, v, model)  # noqa: E731
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    d_s = (f(S + h, D, V) - f(S - h, D, V)) / (2 * h)
    d_dv = (f(S, D + h, V) - f(S, D - h, V)) / (2 * h)
    d_v = (f(S, D, V + h) - f(S, D, V - h)) / (2 * h)

    violations = []
    for name, deriv, bad in (
        ("d_accel/d_spacing >= 0", d_s, d_s < -tol),
        ("d_accel/d_relative_speed >= 0", d_dv, d_dv < -tol),
        ("d_accel/d_speed <= 0", d_v, d_v > tol),
    ):
        if bad.any():
            idx = np.unravel_index(np.argmax(bad), bad.shape)
            violations.append(
                RdcViolation(
                    condition=name,
                    s=float(S[idx]),
                    dv=float(D[idx]),
                    v=float(V[idx]),
                    value=float(deriv[idx]),
                )
            )
    return RdcReport(passed=not violations, violations=tuple(violations))
