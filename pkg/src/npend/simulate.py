"""Fixed-step closed-loop simulation of the nonlinear plant.

The loop integrates the full nonlinear dynamics with classic
fourth-order Runge-Kutta under the control law

    u(t_k) = N * r(t_k) - K x(t_k)

held constant over each step (zero-order hold at the integration step).
Optional Gaussian disturbances -- a force added to the cart input and a
torque on every joint -- are sampled once per step from a stream seeded
by the run configuration and held over the step, so a (config, seed)
pair reproduces a trace bit for bit.

Traces record time, state (interleaved ordering), commanded input,
reference and the sampled disturbances, and export to CSV with the
column layout::

    t,x,xdot,th1,th1dot,...,u,r,Fd,tau1,...,taun

`metrics` reduces a step-response trace to percent overshoot, 2%-band
settling time, steady-state error and per-link peak angles, plus a
single `stabilized` verdict used by the settling-time sweep:
the output must settle within the run, every link must stay inside
|theta| < pi/2, and the steady-state error must be below 2% of the
reference.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import PlantParams, forward_dynamics, paper_order_indices
from .synthesis import (
    Gains,
    InvalidDesignError,
    NotStabilizableError,
    PoleDesign,
    UncontrollableError,
    ZeroDcGainError,
    place_poles,
    second_order_poles,
)

__all__ = [
    "SimConfig",
    "SimTrace",
    "ResponseMetrics",
    "SweepRow",
    "ZeroReferenceError",
    "simulate",
    "metrics",
    "sweep_settling_times",
]

DIVERGENCE_STATE_LIMIT = 1e6


class ZeroReferenceError(ValueError):
    """Step-response metrics are undefined for a zero reference."""


@dataclass(frozen=True)
class SimConfig:
    """One closed-loop run.

    sigma_force / sigma_torque are standard deviations of the per-step
    disturbance samples (N and N*m).  angle_limit is the |theta| beyond
    which the run is declared diverged; pass None to disable it for
    free-swing studies around the hanging configuration.
    """

    duration: float
    dt: float = 1e-3
    reference_amplitude: float = 1.0
    step_time: float = 0.0
    sigma_force: float = 0.0
    sigma_torque: float = 0.0
    seed: int = 0
    initial_state: np.ndarray | None = None
    angle_limit: float | None = float(np.pi)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.duration < self.dt:
            raise ValueError(f"duration {self.duration} shorter than one step {self.dt}")
        if self.sigma_force < 0.0 or self.sigma_torque < 0.0:
            raise ValueError("disturbance standard deviations must be >= 0")
        if self.initial_state is not None:
            object.__setattr__(
                self, "initial_state", np.asarray(self.initial_state, dtype=float)
            )

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.duration / self.dt + 0.5))


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Time-indexed closed-loop record, states in interleaved ordering.

    All arrays share the same length; u[k] is the command held over
    [t_k, t_{k+1});  the final disturbance row is zero padding (no step
    is taken from the last sample).  A diverged run truncates at the
    last valid sample.
    """

    t: np.ndarray
    states: np.ndarray
    u: np.ndarray
    reference: np.ndarray
    force_disturbance: np.ndarray
    torque_disturbance: np.ndarray
    outcome: str  # "ok" | "diverged"

    @property
    def n_links(self) -> int:
        return self.states.shape[1] // 2 - 1

    @property
    def cart_position(self) -> np.ndarray:
        return self.states[:, 0]

    def link_angles(self) -> np.ndarray:
        return self.states[:, 2::2]

    def csv_header(self) -> str:
        n = self.n_links
        cols = ["t", "x", "xdot"]
        for i in range(1, n + 1):
            cols += [f"th{i}", f"th{i}dot"]
        cols += ["u", "r", "Fd"] + [f"tau{i}" for i in range(1, n + 1)]
        return ",".join(cols)

    def to_csv(self, path) -> None:
        data = np.column_stack(
            [
                self.t,
                self.states,
                self.u,
                self.reference,
                self.force_disturbance,
                self.torque_disturbance,
            ]
        )
        with open(path, "w") as fh:
            fh.write(self.csv_header() + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def simulate(params: PlantParams, gains: Gains, cfg: SimConfig) -> SimTrace:
    """Run the nonlinear closed loop; bit-identical for identical inputs."""
    nx = params.n_states
    k_row = np.asarray(gains.k, dtype=float).ravel()
    if k_row.shape != (nx,):
        raise ValueError(f"gain K has {k_row.shape[0]} entries, plant has {nx} states")
    perm = paper_order_indices(params.n)
    k_block = np.empty(nx)
    k_block[perm] = k_row  # K indexes interleaved states; x is kept in block order

    n_pre = float(gains.n_precomp)
    rho = cfg.reference_amplitude
    dt = cfg.dt
    steps = cfg.n_steps
    rng = np.random.default_rng(cfg.seed)

    if cfg.initial_state is None:
        x = np.zeros(nx)
    else:
        x = cfg.initial_state.copy()
        if x.shape != (nx,):
            raise ValueError(f"initial state has shape {x.shape}, expected ({nx},)")

    t = np.arange(steps + 1) * dt
    xs = np.empty((steps + 1, nx))
    us = np.zeros(steps + 1)
    refs = np.where(t >= cfg.step_time, rho, 0.0)
    fds = np.zeros(steps + 1)
    taus = np.zeros((steps + 1, params.n))
    xs[0] = x

    outcome = "ok"
    last = steps
    half_dt = 0.5 * dt
    for k in range(steps):
        u = n_pre * refs[k] - k_block @ x
        us[k] = u
        if cfg.sigma_force > 0.0:
            fds[k] = rng.normal(0.0, cfg.sigma_force)
        if cfg.sigma_torque > 0.0:
            taus[k] = rng.normal(0.0, cfg.sigma_torque, size=params.n)
        force = u + fds[k]
        tau = taus[k] if cfg.sigma_torque > 0.0 else None

        k1 = forward_dynamics(x, force, params, tau)
        k2 = forward_dynamics(x + half_dt * k1, force, params, tau)
        k3 = forward_dynamics(x + half_dt * k2, force, params, tau)
        k4 = forward_dynamics(x + dt * k3, force, params, tau)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        # single max() doubles as the NaN/inf guard: comparisons with NaN
        # are false, so a corrupted state fails the <= test too
        worst = np.abs(x).max()
        if not worst <= DIVERGENCE_STATE_LIMIT:
            outcome = "diverged"
            if np.all(np.isfinite(x)):
                xs[k + 1] = x
                last = k + 1
            else:
                last = k
            break
        xs[k + 1] = x
        if cfg.angle_limit is not None:
            if np.abs(x[1 : params.n + 1]).max() > cfg.angle_limit:
                outcome = "diverged"
                last = k + 1
                break

    if last < steps:
        sl = slice(0, last + 1)
        t, xs, us, refs, fds, taus = (
            t[sl],
            xs[sl],
            us[sl],
            refs[sl],
            fds[sl],
            taus[sl],
        )
    else:
        us[steps] = n_pre * refs[steps] - k_block @ x
    return SimTrace(
        t=t,
        states=xs[:, perm],
        u=us,
        reference=refs,
        force_disturbance=fds,
        torque_disturbance=taus,
        outcome=outcome,
    )


@dataclass(frozen=True, eq=False)
class ResponseMetrics:
    """Step-response summary.  For a diverged trace only `stabilized`
    (False) is meaningful; the other fields are None."""

    stabilized: bool
    percent_overshoot: float | None = None
    settling_time: float | None = None
    steady_state_error: float | None = None
    peak_angles: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "stabilized": bool(self.stabilized),
            "percent_overshoot": None
            if self.percent_overshoot is None
            else float(self.percent_overshoot),
            "settling_time": None if self.settling_time is None else float(self.settling_time),
            "steady_state_error": None
            if self.steady_state_error is None
            else float(self.steady_state_error),
            "peak_angles": None
            if self.peak_angles is None
            else [float(v) for v in self.peak_angles],
        }


def metrics(trace: SimTrace, rho: float) -> ResponseMetrics:
    """Reduce a step-response trace against a reference amplitude rho.

    Overshoot is clamped at zero; settling time is the first sample
    after which the output never leaves the 2% band again (0 when it
    never leaves it); the steady-state error averages the final 5% of
    the trace.
    """
    if rho == 0.0:
        raise ZeroReferenceError("metrics need a nonzero step amplitude")
    if trace.outcome == "diverged":
        return ResponseMetrics(stabilized=False)

    y = trace.cart_position
    overshoot = max(0.0, (y.max() - rho) / rho * 100.0) if rho > 0 else max(
        0.0, (rho - y.min()) / abs(rho) * 100.0
    )
    band = 0.02 * abs(rho)
    outside = np.abs(y - rho) > band
    idx = np.flatnonzero(outside)
    if idx.size == 0:
        settling = 0.0
    elif idx[-1] == y.shape[0] - 1:
        settling = None
    else:
        settling = float(trace.t[idx[-1] + 1])

    tail = max(1, int(0.05 * y.shape[0]))
    sse = float(abs(rho - y[-tail:].mean()))
    peaks = np.abs(trace.link_angles()).max(axis=0)
    stabilized = (
        settling is not None and peaks.max() < np.pi / 2 and sse < 0.02 * abs(rho)
    )
    return ResponseMetrics(
        stabilized=bool(stabilized),
        percent_overshoot=float(overshoot),
        settling_time=settling,
        steady_state_error=sse,
        peak_angles=peaks,
    )


@dataclass(frozen=True, eq=False)
class SweepRow:
    """One settling-time sweep entry."""

    settling_time: float
    stabilized: bool
    reason: str | None = None
    response: ResponseMetrics | None = None
    gains: Gains | None = None

    def to_json_dict(self) -> dict:
        out = {
            "settling_time": float(self.settling_time),
            "stabilized": bool(self.stabilized),
        }
        if self.reason is not None:
            out["reason"] = self.reason
        if self.response is not None:
            out["metrics"] = self.response.to_json_dict()
        if self.gains is not None:
            out["gains"] = self.gains.to_json_dict()
        return out


def sweep_settling_times(
    params: PlantParams,
    state_space,
    base_design: PoleDesign,
    ts_list,
    cfg: SimConfig,
) -> list[SweepRow]:
    """Re-design, re-place and re-simulate for each settling time.

    Rows are independent (each reuses cfg, including its seed); per-row
    synthesis failures are recorded as unstabilized rows instead of
    aborting the sweep.
    """
    rows = []
    for ts in ts_list:
        try:
            design = replace(base_design, settling_time=float(ts))
            poles = second_order_poles(design, state_space.n_states)
            gains = place_poles(state_space.a, state_space.b, poles, c=state_space.c)
        except (
            InvalidDesignError,
            UncontrollableError,
            NotStabilizableError,
            ZeroDcGainError,
        ) as exc:
            rows.append(
                SweepRow(settling_time=float(ts), stabilized=False, reason=str(exc))
            )
            continue
        trace = simulate(params, gains, cfg)
        m = metrics(trace, cfg.reference_amplitude)
        reason = "diverged" if trace.outcome == "diverged" else None
        rows.append(
            SweepRow(
                settling_time=float(ts),
                stabilized=m.stabilized,
                reason=reason,
                response=m,
                gains=gains,
            )
        )
    return rows
