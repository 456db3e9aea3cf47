"""Additive feedback control inputs for automated vehicles.

The primary controller adds u = beta * sigmoid(gamma * s * dv) to the AV's
base car-following acceleration: it nudges the AV toward a softened copy of
its predecessor's speed, is odd in the relative speed, and is bounded by
beta times the sigmoid's supremum, which yields an explicit safety envelope
on beta. Alternate sigmoid shapes can be registered; arctan is the default.

A baseline controller that additionally requires the equilibrium traffic
speed is included for comparison runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import DomainError

__all__ = [
    "SigmoidKernel",
    "SIGMOID_KERNELS",
    "register_sigmoid",
    "ControllerParams",
    "SafetyEnvelope",
    "TsTrcParams",
    "additive_input",
    "virtual_speed",
    "beta_upper_bound",
    "ts_trc_input",
    "validate_controller_conditions",
    "ConditionReport",
    "ConditionResult",
    "SamplingBox",
]


@dataclass(frozen=True)
class SigmoidKernel:
    """A bounded odd shaping function with derivative and supremum."""

    fn: Callable
    deriv: Callable
    sup: float


SIGMOID_KERNELS: dict[str, SigmoidKernel] = {
    "arctan": SigmoidKernel(np.arctan, lambda w: 1.0 / (1.0 + w * w), math.pi / 2),
    "tanh": SigmoidKernel(np.tanh, lambda w: 1.0 - np.tanh(w) ** 2, 1.0),
    "erf": SigmoidKernel(
        erf, lambda w: (2.0 / math.sqrt(math.pi)) * np.exp(-(w * w)), 1.0
    ),
}


def register_sigmoid(name: str, fn: Callable, deriv: Callable, sup: float) -> None:
    """Register an alternate odd, bounded, increasing shaping function."""
    if sup <= 0:
        raise DomainError(f"sigmoid supremum must be positive, got {sup}")
    SIGMOID_KERNELS[name] = SigmoidKernel(fn, deriv, sup)


def get_kernel(name: str) -> SigmoidKernel:
    try:
        return SIGMOID_KERNELS[name]
    except KeyError:
        raise DomainError(
            f"unknown sigmoid kernel {name!r}; known: {sorted(SIGMOID_KERNELS)}"
        ) from None


@dataclass(frozen=True)
class ControllerParams:
    """Gains of the additive controller: output scale beta, argument gain gamma."""

    beta: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.gamma)):
            raise DomainError("controller gains must be finite")
        if self.beta < 0 or self.gamma < 0:
            raise DomainError(
                f"controller gains must be non-negative, got beta={self.beta}, "
                f"gamma={self.gamma}"
            )


@dataclass(frozen=True)
class SafetyEnvelope:
    """Worst-case spacing budget for a controlled AV.

    With the control magnitude bounded by `alpha`, the spacing can shrink by
    at most alpha * horizon, so requiring
    alpha <= (initial_spacing - min_safe_spacing) / horizon keeps the AV
    above the minimum safe spacing for any disturbance history.
    """

    s0_av: float
    min_safe_spacing: float
    horizon: float
    alpha: float

    def __post_init__(self):
        if not (self.s0_av > self.min_safe_spacing > 0):
            raise DomainError(
                f"need initial spacing {self.s0_av} > min safe spacing "
                f"{self.min_safe_spacing} > 0"
            )
        if self.horizon <= 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        budget = (self.s0_av - self.min_safe_spacing) / self.horizon
        if self.alpha > budget * (1.0 + 1e-12):
            raise DomainError(
                f"control bound alpha={self.alpha} exceeds the safe drain rate "
                f"{budget}"
            )

    @classmethod
    def for_controller(
        cls,
        params: ControllerParams,
        s0_av: float,
        min_safe_spacing: float,
        horizon: float,
        kernel: str = "arctan",
    ) -> "SafetyEnvelope":
        alpha = params.beta * get_kernel(kernel).sup
        return cls(s0_av, min_safe_spacing, horizon, alpha)


@dataclass(frozen=True)
class TsTrcParams:
    """Baseline controller gains; requires the equilibrium speed v_star."""

    phi1: float
    phi2: float
    phi3: float
    v_star: float

    def __post_init__(self):
        if min(self.phi1, self.phi2, self.phi3) < 0:
            raise DomainError("ts-trc gains must be non-negative")
        if self.v_star <= 0:
            raise DomainError(f"v_star must be positive, got {self.v_star}")


def additive_input(
    s: float, dv: float, p: ControllerParams, kernel: str = "arctan"
) -> float:
    """Additive control acceleration beta * sigmoid(gamma * s * dv).

    Zero exactly when dv is zero, same sign as dv otherwise, and bounded in
    magnitude by beta times the kernel supremum.
    """
    if not (math.isfinite(s) and math.isfinite(dv)):
        raise DomainError("additive_input requires finite s and dv")
    if s <= 0:
        raise DomainError(f"spacing must be positive, got {s}")
    k = get_kernel(kernel)
    return float(p.beta * k.fn(p.gamma * s * dv))


def virtual_speed(
    v_prev: float, s: float, dv: float, p: ControllerParams, kernel: str = "arctan"
) -> float:
    """Softened predecessor speed the controlled AV effectively tracks."""
    if not math.isfinite(v_prev):
        raise DomainError("v_prev must be finite")
    return v_prev + additive_input(s, dv, p, kernel)


def beta_upper_bound(s0_av: float, min_safe: float, t_f: float) -> float:
    """Largest arctan-controller beta whose worst case keeps spacing safe.

    Equals 2 * (s0_av - min_safe) / (pi * t_f): the control magnitude is
    below beta*pi/2, so spacing cannot drain below min_safe within t_f.
    Zero slack means zero control authority.
    """
    if not (s0_av >= min_safe):
        raise DomainError(
            f"need initial spacing {s0_av} >= min safe spacing {min_safe}"
        )
    if t_f <= 0:
        raise DomainError(f"horizon must be positive, got {t_f}")
    return 2.0 * (s0_av - min_safe) / (math.pi * t_f)


def ts_trc_input(s: float, dv: float, v_prev: float, p: TsTrcParams) -> float:
    """Baseline additive input phi1*(dv + phi2*arctan(phi3*s*(v_star - v_prev)))."""
    if not all(map(math.isfinite, (s, dv, v_prev))):
        raise DomainError("ts_trc_input requires finite inputs")
    if s <= 0:
        raise DomainError(f"spacing must be positive, got {s}")
    return float(
        p.phi1 * (dv + p.phi2 * math.atan(p.phi3 * s * (p.v_star - v_prev)))
    )


# --- numerical verification of the controller-class conditions -------------


@dataclass(frozen=True)
class SamplingBox:
    """Grid over (s, dv) used by the condition checks."""

    s: tuple[float, float, int] = (1.0, 150.0, 40)
    dv: tuple[float, float, int] = (-6.0, 6.0, 41)

    def grids(self):
        s = np.linspace(*self.s)
        dv = np.linspace(*self.dv)
        if not np.any(dv == 0.0):
            dv = np.sort(np.append(dv, 0.0))
        return s, dv


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    detail: str
    counterexample: tuple[float, float] | None = None


@dataclass(frozen=True)
class ConditionReport:
    monotonicity: ConditionResult
    sign: ConditionResult
    smoothness: ConditionResult
    boundedness: ConditionResult

    @property
    def all_passed(self) -> bool:
        return all(
            r.passed
            for r in (self.monotonicity, self.sign, self.smoothness, self.boundedness)
        )

    def __bool__(self) -> bool:
        return self.all_passed


def _check_monotonicity(u_fn, s_grid, dv_grid, tol) -> ConditionResult:
    # increasing in dv at fixed s; increasing in s in the direction that
    # increases s*dv (equivalently, increasing in s for dv > 0 and
    # decreasing for dv < 0)
    S, D = np.meshgrid(s_grid, dv_grid, indexing="ij")
    U = u_fn(S, D)
    ddv = np.diff(U, axis=1)
    if (ddv < -tol).any():
        i, j = np.unravel_index(np.argmin(ddv), ddv.shape)
        return ConditionResult(
            False,
            f"u not increasing in dv near (s={S[i, j]:.3f}, dv={D[i, j]:.3f})",
            (float(S[i, j]), float(D[i, j])),
        )
    ds = np.diff(U, axis=0) * np.sign(D[:-1, :])
    if (ds < -tol).any():
        i, j = np.unravel_index(np.argmin(ds), ds.shape)
        return ConditionResult(
            False,
            f"u not monotone in s along sign(dv) near (s={S[i, j]:.3f}, "
            f"dv={D[i, j]:.3f})",
            (float(S[i, j]), float(D[i, j])),
        )
    return ConditionResult(True, "monotone in dv and in s along sign(dv)")


def _check_sign(u_fn, s_grid, dv_grid) -> ConditionResult:
    S, D = np.meshgrid(s_grid, dv_grid, indexing="ij")
    U = u_fn(S, D)
    at_zero = np.abs(U[:, D[0] == 0.0])
    if at_zero.size and at_zero.max() > 0.0:
        i = int(np.argmax(at_zero[:, 0]))
        return ConditionResult(
            False,
            f"u != 0 at dv=0 (s={s_grid[i]:.3f}, u={at_zero[i, 0]:.3e})",
            (float(s_grid[i]), 0.0),
        )
    off = D != 0.0
    prod = U[off] * D[off]
    if (prod <= 0.0).any():
        k = int(np.argmin(prod))
        s_bad, d_bad = S[off][k], D[off][k]
        return ConditionResult(
            False,
            f"u*dv <= 0 at (s={s_bad:.3f}, dv={d_bad:.3f})",
            (float(s_bad), float(d_bad)),
        )
    return ConditionResult(True, "u*dv > 0 off dv=0 and u(., 0) = 0")


def _check_smoothness(u_fn, s_grid, ratio_limit=1.6) -> ConditionResult:
    # Sample u along smooth synthetic trajectories and compare max first/second
    # time-differences under dt refinement: they stabilize for a smooth
    # controller but scale like 1/dt (1/dt^2) across a jump. The dt pair must
    # resolve the steepest transition a saturating controller can have on the
    # box, so it sits well below the sweep time scales used here.
    s_mid = 0.5 * (s_grid[0] + s_grid[-1])
    s_amp = 0.45 * (s_grid[-1] - s_grid[0])

    def trajectory_maxdiffs(dt):
        t = np.arange(0.0, 40.0, dt)
        s = s_mid + s_amp * np.sin(0.37 * t)
        dv = 2.5 * np.sin(0.23 * t + 0.4)
        u = u_fn(s, dv)
        d1 = np.diff(u) / dt
        d2 = np.diff(u, 2) / dt**2
        return np.abs(d1).max(), np.abs(d2).max()

    d1a, d2a = trajectory_maxdiffs(0.002)
    d1b, d2b = trajectory_maxdiffs(0.001)
    if not all(map(math.isfinite, (d1a, d2a, d1b, d2b))):
        return ConditionResult(False, "non-finite sampled time-differences")
    r1 = d1b / d1a if d1a > 0 else 1.0
    r2 = d2b / d2a if d2a > 0 else 1.0
    if r1 > ratio_limit or r2 > ratio_limit:
        return ConditionResult(
            False,
            f"time-differences grow under dt refinement (ratios {r1:.2f}, "
            f"{r2:.2f}): derivative appears unbounded",
        )
    return ConditionResult(
        True, f"sampled du/dt <= {d1b:.3g}, d2u/dt2 <= {d2b:.3g}, stable under refinement"
    )


def _check_boundedness(u_fn, s_grid, dv_grid, alpha_claim, tol) -> ConditionResult:
    S, D = np.meshgrid(s_grid, dv_grid, indexing="ij")
    U = np.abs(u_fn(S, D))
    sup = float(U.max())
    if sup > alpha_claim + tol:
        i, j = np.unravel_index(np.argmax(U), U.shape)
        return ConditionResult(
            False,
            f"sup |u| = {sup:.6g} exceeds claimed bound {alpha_claim:.6g} at "
            f"(s={S[i, j]:.3f}, dv={D[i, j]:.3f})",
            (float(S[i, j]), float(D[i, j])),
        )
    return ConditionResult(True, f"sup |u| = {sup:.6g} <= {alpha_claim:.6g}")


def validate_controller_conditions(
    ctrl: Callable,
    alpha_claim: float,
    box: SamplingBox = SamplingBox(),
    tol: float = 1e-12,
) -> ConditionReport:
    """Check the four admissibility conditions of the additive controller class.

    `ctrl(s, dv)` must accept numpy arrays. The conditions, each verified
    numerically on the sampling box: (1) monotone increasing in dv and in s
    along the direction that increases s*dv; (2) u*dv > 0 for dv != 0 and
    u = 0 at dv = 0; (3) bounded sampled first/second time-differences along
    smooth test trajectories; (4) sup |u| <= alpha_claim.
    """
    s_grid, dv_grid = box.grids()
    u_fn = lambda s, dv: np.asarray(ctrl(s, dv), dtype=float)  # noqa: E731
    return ConditionReport(
        monotonicity=_check_monotonicity(u_fn, s_grid, dv_grid, tol),
        sign=_check_sign(u_fn, s_grid, dv_grid),
        smoothness=_check_smoothness(u_fn, s_grid),
        boundedness=_check_boundedness(u_fn, s_grid, dv_grid, alpha_claim, tol),
    )
