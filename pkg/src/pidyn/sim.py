"""Ground-truth constrained forward dynamics and time integration.

The simulator integrates the constraint-consistent joint accelerations,
removes numerical drift at the velocity level every step (plus a position
correction for surface contact), extracts the true constraint force for
comparison against the controller's expectation, and injects the configured
disturbances (external wrenches, added payload mass, a stiff "human hold"
spring).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import Pose


class IntegrationError(RuntimeError):
    pass


def constrained_acceleration(h, p, p_dot, mc_inv, qdot, tau, jx, fx) -> np.ndarray:
    """qdd = Mc^-1 (P tau - P h + P_dot qdot + P Jx^T F_x).

    The disturbance is projected alongside the actuation torque, which keeps
    the result exactly consistent with the constraint's acceleration-level
    condition. With P = I this reduces to the unconstrained qdd =
    M^-1 (tau - h + Jx^T F_x).
    """
    p = np.asarray(p, dtype=float)
    forcing = np.asarray(tau, dtype=float) - np.asarray(h, dtype=float)
    if fx is not None:
        forcing = forcing + np.asarray(jx).T @ np.asarray(fx, dtype=float)
    return np.asarray(mc_inv) @ (p @ forcing + np.asarray(p_dot) @ np.asarray(qdot, dtype=float))


def constraint_residual(jc, jc_dot, qdot, qddot) -> float:
    """Max violation of the acceleration-level constraint condition."""
    r = np.asarray(jc) @ np.asarray(qddot) + np.asarray(jc_dot) @ np.asarray(qdot)
    return float(np.max(np.abs(r), initial=0.0))


def true_constraint_force(m, h, p, tau, jx, fx, qddot, wrench_jac_t_pinv) -> np.ndarray:
    """Constraint wrench measured from the constrained dynamics balance.

    lambda = pinv(W^T) (I - P)(M qdd + h - tau - Jx^T F_x): the simulator's
    stand-in for a wrist force/torque sensor.
    """
    p = np.asarray(p, dtype=float)
    eye = np.eye(p.shape[0])
    residual = np.asarray(m) @ np.asarray(qddot) + np.asarray(h) - np.asarray(tau, dtype=float)
    if fx is not None:
        residual = residual - np.asarray(jx).T @ np.asarray(fx, dtype=float)
    return np.asarray(wrench_jac_t_pinv) @ ((eye - p) @ residual)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    method: str = "semi_implicit"        # or "rk4"
    baumgarte_gain: float | None = None  # 1/s; None -> 1/dt (full correction)
    drift_tolerance: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("integrator dt must be positive")
        if self.method not in ("semi_implicit", "rk4"):
            raise ValueError(f"unknown integrator method '{self.method}'")

    @property
    def position_gain(self) -> float:
        gain = self.baumgarte_gain if self.baumgarte_gain is not None else 1.0 / self.dt
        return min(gain * self.dt, 1.0)


@dataclass(frozen=True)
class SimState:
    """Stacked joint state of all arms plus the running drift metric."""

    q: np.ndarray
    qdot: np.ndarray
    time: float
    drift: float = 0.0


def step(state: SimState, qddot, jc, jc_pinv, config: IntegratorConfig,
         position_error=None) -> SimState:
    """One semi-implicit Euler step with velocity-level drift removal.

    After updating velocities, the constrained component pinv(Jc) Jc qdot is
    subtracted (the shipped constraints are stationary, so the feasible
    constrained velocity is zero). ``position_error`` triggers the holonomic
    Baumgarte correction used by the surface-contact scenario.
    """
    qdot = state.qdot + config.dt * np.asarray(qddot, dtype=float)
    jc = np.asarray(jc, dtype=float)
    jc_pinv = np.asarray(jc_pinv, dtype=float)
    qdot = qdot - jc_pinv @ (jc @ qdot)
    q = state.q + config.dt * qdot
    if position_error is not None:
        q = q - config.position_gain * (jc_pinv @ np.asarray(position_error, dtype=float))
    drift = float(np.max(np.abs(jc @ qdot), initial=0.0))
    if drift > config.drift_tolerance:
        raise IntegrationError(
            f"constraint drift {drift:.3e} exceeds tolerance {config.drift_tolerance:.3e} "
            f"at t={state.time + config.dt:.4f}"
        )
    return SimState(q=q, qdot=qdot, time=state.time + config.dt, drift=drift)


def step_rk4(state: SimState, accel_fn, jc, jc_pinv, config: IntegratorConfig,
             position_error=None) -> SimState:
    """Classical RK4 step over (q, qdot) with the applied torque held constant.

    ``accel_fn(q, qdot)`` must return the constrained acceleration at the
    substate. Drift removal and the optional position correction are applied
    once at the end of the step, as in the semi-implicit path.
    """
    dt = config.dt
    q0, v0 = state.q, state.qdot

    k1v = accel_fn(q0, v0)
    k1q = v0
    k2v = accel_fn(q0 + 0.5 * dt * k1q, v0 + 0.5 * dt * k1v)
    k2q = v0 + 0.5 * dt * k1v
    k3v = accel_fn(q0 + 0.5 * dt * k2q, v0 + 0.5 * dt * k2v)
    k3q = v0 + 0.5 * dt * k2v
    k4v = accel_fn(q0 + dt * k3q, v0 + dt * k3v)
    k4q = v0 + dt * k3v

    q = q0 + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
    qdot = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    jc = np.asarray(jc, dtype=float)
    jc_pinv = np.asarray(jc_pinv, dtype=float)
    qdot = qdot - jc_pinv @ (jc @ qdot)
    if position_error is not None:
        q = q - config.position_gain * (jc_pinv @ np.asarray(position_error, dtype=float))
    drift = float(np.max(np.abs(jc @ qdot), initial=0.0))
    if drift > config.drift_tolerance:
        raise IntegrationError(f"constraint drift {drift:.3e} exceeds tolerance")
    return SimState(q=q, qdot=qdot, time=state.time + dt, drift=drift)


def _smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _ramp_factor(t, t_start, t_end, ramp) -> float:
    if t < t_start or t >= t_end:
        return 0.0
    if ramp <= 0.0:
        return 1.0
    up = _smoothstep((t - t_start) / ramp)
    down = _smoothstep((t_end - t) / ramp)
    return min(up, down)


@dataclass(frozen=True)
class WrenchSegment:
    """Constant external wrench at the task frame, smoothly ramped on and off."""

    t_start: float
    t_end: float
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ramp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float))


@dataclass(frozen=True)
class AddedMassSegment:
    """Extra payload rigidly attached to the object (unknown to the controller)."""

    t_start: float
    t_end: float
    mass: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))


@dataclass(frozen=True)
class PoseClampSegment:
    """A human holding the task frame near a fixed world pose: stiff spring pull.

    The clamp target is the task position when the segment engages, shifted
    by ``offset``; a hard kinematic clamp would make the ODE ill-posed.
    """

    t_start: float
    t_end: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stiffness: float = 1e4
    damping: float = 0.0
    ramp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))


@dataclass(frozen=True)
class DisturbanceProfile:
    segments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        by_type: dict = {}
        for seg in self.segments:
            by_type.setdefault(type(seg), []).append(seg)
        for segs in by_type.values():
            segs = sorted(segs, key=lambda s: s.t_start)
            for a, b in zip(segs, segs[1:]):
                if b.t_start < a.t_end:
                    raise ValueError(
                        f"overlapping disturbance segments of type {type(a).__name__}"
                    )


@dataclass
class Disturbance:
    """Resolved disturbance at one instant."""

    wrench: np.ndarray                     # 6, [moment; force], world, at the task frame
    added_mass: float = 0.0
    added_mass_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    clamp_active: bool = False


class DisturbanceEngine:
    """Evaluates a DisturbanceProfile along the run (keeps clamp anchors)."""

    def __init__(self, profile: DisturbanceProfile):
        self.profile = profile
        self._clamp_anchors: dict = {}

    def apply(self, t: float, task_pose: Pose, task_twist) -> Disturbance:
        wrench = np.zeros(6)
        added_mass = 0.0
        added_offset = np.zeros(3)
        clamp_active = False
        for seg in self.profile.segments:
            if isinstance(seg, WrenchSegment):
                k = _ramp_factor(t, seg.t_start, seg.t_end, seg.ramp)
                if k > 0.0:
                    wrench[:3] += k * seg.moment
                    wrench[3:] += k * seg.force
            elif isinstance(seg, AddedMassSegment):
                if seg.t_start <= t < seg.t_end:
                    added_mass += seg.mass
                    added_offset = seg.offset
            elif isinstance(seg, PoseClampSegment):
                if seg.t_start <= t < seg.t_end:
                    key = id(seg)
                    if key not in self._clamp_anchors:
                        self._clamp_anchors[key] = task_pose.position + seg.offset
                    target = self._clamp_anchors[key]
                    k = _ramp_factor(t, seg.t_start, seg.t_end, seg.ramp) if seg.ramp else 1.0
                    clamp_active = True
                    wrench[3:] += k * (
                        seg.stiffness * (target - task_pose.position)
                        - seg.damping * np.asarray(task_twist, dtype=float)[3:]
                    )
            else:
                raise TypeError(f"unknown disturbance segment {type(seg).__name__}")
        return Disturbance(wrench=wrench, added_mass=added_mass,
                           added_mass_offset=added_offset, clamp_active=clamp_active)


def rigid_transport_error(anchor_pose: Pose, other_pose: Pose, reference: Pose) -> float:
    """How far two hands disagree about the rigid object pose (position part)."""
    predicted = anchor_pose.compose(reference)
    return float(np.linalg.norm(predicted.position - other_pose.position))
