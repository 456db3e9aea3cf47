"""Gradient-based selection of the additive controller gains.

The objective is the integrated squared speed gap between each controlled AV
and its predecessor. Its gradient with respect to the gains (beta, gamma) is
obtained from a two-component sensitivity ODE co-integrated with the platoon:
the sensitivity treats the AV's spacing and its predecessor's speed as
exogenous signals, so it differentiates exactly the AV's own speed equation.
A projected fixed-step descent clamps beta to its safety bound and gamma to
non-negative values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .controller import ControllerParams, get_kernel
from .dynamics import CarFollowingInput, OvrvParams, ovrv_accel_arrays
from .errors import DomainError, NumericalBlowupError, OptimizeError
from .simulator import PlatoonEngine, Scenario, Trajectory, assemble_trajectory

__all__ = [
    "SensitivityState",
    "OptimizerConfig",
    "OptimizationTrace",
    "objective_j",
    "sensitivity_rhs",
    "descent_direction",
    "project_feasible",
    "simulate_with_sensitivity",
    "replayed_objective",
    "optimize",
    "write_trace_csv",
]


@dataclass(frozen=True)
class SensitivityState:
    """Sensitivities of the AV speed to beta (z1) and gamma (z2)."""

    z1: float = 0.0
    z2: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.z1, self.z2])


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the projected descent.

    epsilon is the fixed step size; phi the convergence threshold on the
    change of the objective between iterations; beta_max the feasibility
    ceiling on beta. per_av switches to one gain pair per AV instead of a
    shared pair; sensitivity="coupled" additionally propagates the spacing
    sensitivity (experimental comparison mode).
    """

    beta_max: float
    theta0: ControllerParams = ControllerParams(0.05, 1.0)
    epsilon: float = 1e-5
    phi: float = 1e-6
    n_max: int = 300
    per_av: bool = False
    sensitivity: str = "exogenous"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.phi <= 0:
            raise DomainError(f"phi must be positive, got {self.phi}")
        if self.n_max < 1:
            raise DomainError(f"n_max must be at least 1, got {self.n_max}")
        if self.beta_max <= 0:
            raise DomainError(f"beta_max must be positive, got {self.beta_max}")
        if self.sensitivity not in ("exogenous", "coupled"):
            raise DomainError(
                f"sensitivity mode must be 'exogenous' or 'coupled', "
                f"got {self.sensitivity!r}"
            )


@dataclass
class OptimizationTrace:
    """Per-iteration history of the descent.

    thetas and lambdas have shape (iterations, 2) for the shared-gain mode
    and (iterations, n_av, 2) for the per-AV mode.
    """

    thetas: np.ndarray
    objectives: np.ndarray
    lambdas: np.ndarray
    reason: str
    per_av: bool = False

    def __len__(self) -> int:
        return len(self.objectives)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.objectives))


def objective_j(traj: Trajectory, av_indices) -> float:
    """Integrated half squared speed gap, summed over the controlled AVs."""
    av_indices = tuple(av_indices)
    if not av_indices:
        raise DomainError("objective needs at least one controlled AV")
    if min(av_indices) < 1 or max(av_indices) >= traj.n_vehicles:
        raise DomainError(f"AV indices {av_indices} out of range")
    total = 0.0
    for i in av_indices:
        gap = traj.v[:, i] - traj.v[:, i - 1]
        total += 0.5 * np.trapezoid(gap**2, traj.t)
    return float(total)


def _sensitivity_terms(s, dv, beta, gamma, av_model: OvrvParams, kernel):
    """Coefficients of the exogenous-signal sensitivity ODE (vectorized)."""
    w = gamma * s * dv
    kp = kernel.deriv(w)
    d_dv = av_model.k2 + beta * gamma * s * kp
    drdv = -av_model.k1 * av_model.tau - d_dv
    drdb = kernel.fn(w)
    drdg = beta * s * dv * kp
    return drdv, drdb, drdg


def sensitivity_rhs(
    z: SensitivityState,
    state: CarFollowingInput,
    theta: ControllerParams,
    av_model: OvrvParams,
    kernel: str = "arctan",
) -> SensitivityState:
    """Time derivative of the gain sensitivities at one AV state.

    Implements zdot = (dr/dv) z + dr/dtheta for the AV speed equation
    r = k1*(s - eta - tau*v) + k2*dv + beta*kernel(gamma*s*dv), with the
    spacing and the predecessor speed held exogenous (so d(dv)/dv = -1).
    """
    k = get_kernel(kernel)
    drdv, drdb, drdg = _sensitivity_terms(
        state.s, state.dv, theta.beta, theta.gamma, av_model, k
    )
    return SensitivityState(
        z1=float(drdv * z.z1 + drdb),
        z2=float(drdv * z.z2 + drdg),
    )


def descent_direction(traj: Trajectory, z_series: np.ndarray, av_index: int) -> np.ndarray:
    """Gradient estimate: integral of z(t) times the AV speed gap."""
    z_series = np.asarray(z_series, dtype=float)
    if z_series.shape[0] != len(traj.t):
        raise DomainError(
            f"sensitivity series length {z_series.shape[0]} does not match "
            f"trajectory grid {len(traj.t)}"
        )
    gap = traj.v[:, av_index] - traj.v[:, av_index - 1]
    return np.trapezoid(z_series * gap[:, None], traj.t, axis=0)


def project_feasible(theta, beta_max: float) -> ControllerParams:
    """Clamp beta into [0, beta_max] and gamma into [0, inf).

    Accepts ControllerParams or a raw (beta, gamma) pair, since tentative
    descent updates may leave the feasible box before projection.
    """
    if beta_max <= 0:
        raise DomainError(f"beta_max must be positive, got {beta_max}")
    if isinstance(theta, ControllerParams):
        b, g = theta.beta, theta.gamma
    else:
        b, g = float(theta[0]), float(theta[1])
    return ControllerParams(beta=min(max(b, 0.0), beta_max), gamma=max(g, 0.0))


def _per_follower_gains(scenario: Scenario, theta_av: np.ndarray) -> tuple:
    """Spread per-AV gain rows onto per-follower arrays (zeros for HVs)."""
    beta = np.zeros(scenario.n_followers)
    gamma = np.zeros(scenario.n_followers)
    for row, i in enumerate(scenario.av_indices):
        beta[i - 1] = theta_av[row, 0]
        gamma[i - 1] = theta_av[row, 1]
    return beta, gamma


def simulate_with_sensitivity(
    scenario: Scenario,
    theta_av: np.ndarray,
    mode: str = "exogenous",
) -> tuple[Trajectory, np.ndarray]:
    """Integrate the platoon and the per-AV gain sensitivities together.

    theta_av has one (beta, gamma) row per AV. Returns the trajectory and
    the sensitivity series with shape (n_samples, n_av, 2), z(0) = 0.
    """
    av_indices = scenario.av_indices
    if not av_indices:
        raise DomainError("scenario has no AV to differentiate")
    theta_av = np.asarray(theta_av, dtype=float).reshape(len(av_indices), 2)
    beta_f, gamma_f = _per_follower_gains(scenario, theta_av)
    engine = PlatoonEngine(scenario, beta=beta_f, gamma=gamma_f, per_follower_gains=True)
    kernel = engine.kernel
    av_model = scenario.av_model
    av_pos = np.array([i - 1 for i in av_indices])
    beta_av = theta_av[:, 0]
    gamma_av = theta_av[:, 1]
    coupled = mode == "coupled"

    def z_rhs(stage, z, zs):
        s = stage[2][av_pos]
        dv = stage[3][av_pos]
        drdv, drdb, drdg = _sensitivity_terms(s, dv, beta_av, gamma_av, av_model, kernel)
        forcing = np.stack([drdb, drdg], axis=-1)
        zdot = drdv[:, None] * z + forcing
        if not coupled:
            return zdot, None
        # coupled mode: also track spacing sensitivity w = ds/dtheta with
        # wdot = -z; it feeds back through dr/ds
        w_arg = gamma_av * s * dv
        kp = kernel.deriv(w_arg)
        drds = av_model.k1 + beta_av * gamma_av * dv * kp
        return zdot + drds[:, None] * zs, -z

    dt = scenario.dt
    steps = int(round(scenario.t_f / dt))
    t_grid = np.arange(steps + 1) * dt
    x, v = engine.initial_arrays()
    z = np.zeros((len(av_indices), 2))
    zs = np.zeros_like(z)

    record = ("x", "v", "a", "s", "dv", "u")
    out = {"t": t_grid}
    for name in record:
        tail = (engine.n + 1,) if name in ("x", "v") else (engine.n,)
        out[name] = np.empty((steps + 1,) + tail)
    z_out = np.empty((steps + 1, len(av_indices), 2))

    def record_sample(idx, x_k, z_k, stage):
        v_all, acc, s, dv, u = stage
        for name, arr in (
            ("x", x_k), ("v", v_all), ("a", acc), ("s", s), ("dv", dv), ("u", u)
        ):
            out[name][idx] = arr
        z_out[idx] = z_k

    rk4 = scenario.integrator == "rk4"
    t = 0.0
    for k in range(steps):
        stage1 = engine.rhs(t, x, v)
        record_sample(k, x, z, stage1)
        k1z, k1zs = z_rhs(stage1, z, zs)
        k1x, k1v = stage1[0], stage1[1]
        if rk4:
            h = dt
            s2 = engine.rhs(t + h / 2, x + h / 2 * k1x, v + h / 2 * k1v)
            k2z, k2zs = z_rhs(s2, z + h / 2 * k1z, zs + (h / 2 * k1zs if coupled else 0))
            s3 = engine.rhs(t + h / 2, x + h / 2 * s2[0], v + h / 2 * s2[1])
            k3z, k3zs = z_rhs(s3, z + h / 2 * k2z, zs + (h / 2 * k2zs if coupled else 0))
            s4 = engine.rhs(t + h, x + h * s3[0], v + h * s3[1])
            k4z, k4zs = z_rhs(s4, z + h * k3z, zs + (h * k3zs if coupled else 0))
            x = x + h / 6 * (k1x + 2 * s2[0] + 2 * s3[0] + s4[0])
            v = v + h / 6 * (k1v + 2 * s2[1] + 2 * s3[1] + s4[1])
            z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
            if coupled:
                zs = zs + h / 6 * (k1zs + 2 * k2zs + 2 * k3zs + k4zs)
        else:
            x = x + dt * k1x
            v = v + dt * k1v
            z = z + dt * k1z
            if coupled:
                zs = zs + dt * k1zs
        v = np.maximum(v, 0.0)
        t = t_grid[k + 1]
        engine._check_finite(v, t)
        if not np.isfinite(z).all():
            raise NumericalBlowupError(int(av_indices[0]), t)
    record_sample(steps, x, z, engine.rhs(t, x, v))

    return assemble_trajectory(scenario, out), z_out


def replayed_objective(
    traj: Trajectory,
    scenario: Scenario,
    av_index: int,
    theta: ControllerParams,
    kernel: str = "arctan",
) -> float:
    """Objective with the AV speed re-solved against frozen exogenous signals.

    The spacing and predecessor-speed series are taken from `traj` as given
    functions of time; only the AV's own speed ODE is integrated for the
    supplied gains. This matches the structure assumed by the sensitivity
    ODE, so its finite differences are the reference for the gradient.
    """
    k = get_kernel(kernel)
    t = traj.t
    dt = float(t[1] - t[0])
    s_sig = traj.s[:, av_index]
    vp_sig = traj.v[:, av_index - 1]
    s_mid = 0.5 * (s_sig[:-1] + s_sig[1:])
    vp_mid = 0.5 * (vp_sig[:-1] + vp_sig[1:])
    av = scenario.av_model

    def rate(s, vp, v):
        dv = vp - v
        return ovrv_accel_arrays(s, dv, v, av) + theta.beta * k.fn(
            theta.gamma * s * dv
        )

    v = float(traj.v[0, av_index])
    v_series = np.empty_like(s_sig)
    v_series[0] = v
    rk4 = scenario.integrator == "rk4"
    for i in range(len(t) - 1):
        k1 = rate(s_sig[i], vp_sig[i], v)
        if rk4:
            k2 = rate(s_mid[i], vp_mid[i], v + dt / 2 * k1)
            k3 = rate(s_mid[i], vp_mid[i], v + dt / 2 * k2)
            k4 = rate(s_sig[i + 1], vp_sig[i + 1], v + dt * k3)
            v = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            v = v + dt * k1
        v_series[i + 1] = v
    return float(0.5 * np.trapezoid((v_series - vp_sig) ** 2, t))


def optimize(
    scenario: Scenario, cfg: OptimizerConfig
) -> tuple[ControllerParams | list[ControllerParams], OptimizationTrace]:
    """Projected descent on the controller gains.

    Each iteration simulates the platoon with the current gains, co-integrates
    the sensitivities, forms the descent direction, and updates the gains with
    a fixed step, projecting onto the feasible box. Stops when the objective
    change drops to the threshold, the direction vanishes, or the iteration
    cap is reached. Returns the best-objective gains and the full trace.
    """
    av_indices = scenario.av_indices
    if not av_indices:
        raise DomainError("scenario has no AV to tune")
    if scenario.controller.kind != "ts-ops":
        raise DomainError(
            f"only the 'ts-ops' controller is tunable, got "
            f"{scenario.controller.kind!r}"
        )
    n_av = len(av_indices)
    theta0 = project_feasible(cfg.theta0, cfg.beta_max)
    theta_av = np.tile([theta0.beta, theta0.gamma], (n_av, 1))

    thetas, objectives, lambdas = [], [], []
    reason = "max-iterations"

    def make_trace():
        if cfg.per_av:
            th = np.array(thetas)
            lm = np.array(lambdas)
        else:
            th = np.array([t[0] for t in thetas])
            lm = np.array(lambdas)
        return OptimizationTrace(
            thetas=th,
            objectives=np.array(objectives),
            lambdas=lm,
            reason=reason,
            per_av=cfg.per_av,
        )

    for kappa in range(1, cfg.n_max + 1):
        try:
            traj, z_series = simulate_with_sensitivity(
                scenario, theta_av, mode=cfg.sensitivity
            )
        except NumericalBlowupError as err:
            reason = "blow-up"
            raise OptimizeError(str(err), make_trace()) from err
        j_val = objective_j(traj, av_indices)
        lam_av = np.stack(
            [
                descent_direction(traj, z_series[:, row, :2], i)
                for row, i in enumerate(av_indices)
            ]
        )
        thetas.append(theta_av.copy())
        objectives.append(j_val)
        lambdas.append(lam_av if cfg.per_av else lam_av.sum(axis=0))

        if kappa > 1 and abs(objectives[-1] - objectives[-2]) <= cfg.phi:
            reason = "converged"
            break
        lam_step = lam_av if cfg.per_av else np.tile(lam_av.sum(axis=0), (n_av, 1))
        if not lam_step.any():
            reason = "converged"
            break
        if kappa == cfg.n_max:
            break
        new_rows = []
        for row in range(n_av):
            proj = project_feasible(
                theta_av[row] - cfg.epsilon * lam_step[row], cfg.beta_max
            )
            new_rows.append([proj.beta, proj.gamma])
        theta_av = np.array(new_rows)

    trace = make_trace()
    best = trace.thetas[trace.best_index]
    if cfg.per_av:
        result = [ControllerParams(beta=row[0], gamma=row[1]) for row in best]
    else:
        result = ControllerParams(beta=float(best[0]), gamma=float(best[1]))
    return result, trace


def write_trace_csv(trace: OptimizationTrace, path) -> None:
    """Export a shared-gain trace as iter,beta,gamma,J,lambda_beta,lambda_gamma."""
    if trace.per_av:
        raise DomainError("CSV trace export covers the shared-gain mode only")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "beta", "gamma", "J", "lambda_beta", "lambda_gamma"])
        for k in range(len(trace)):
            writer.writerow(
                [
                    k + 1,
                    f"{trace.thetas[k, 0]:.10g}",
                    f"{trace.thetas[k, 1]:.10g}",
                    f"{trace.objectives[k]:.10g}",
                    f"{trace.lambdas[k, 0]:.10g}",
                    f"{trace.lambdas[k, 1]:.10g}",
                ]
            )
