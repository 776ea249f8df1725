"""Kinematics and joint-space dynamics of serial-chain manipulators.

The end-effector Jacobian is geometric, rows ordered [angular; linear]. The
mass matrix comes from a composite-rigid-body pass over world-frame spatial
inertias; the bias vector (Coriolis, centrifugal, gyroscopic and gravity
torques) from a recursive Newton-Euler sweep with zero joint acceleration.
Everything here is a pure function of (model, q, qdot).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ManipulatorModel
from .rotations import Pose, quat_from_matrix, rotation_about_axis, skew


@dataclass(frozen=True)
class JointState:
    """Joint positions (rad) and velocities (rad/s) at a given time."""

    q: np.ndarray
    qdot: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))
        if self.q.shape != self.qdot.shape:
            raise ValueError(
                f"q and qdot must have the same length, got {self.q.shape} and {self.qdot.shape}"
            )


@dataclass(frozen=True)
class LinkFrames:
    """World pose of every joint frame plus the end-effector."""

    positions: np.ndarray   # (Q, 3) joint origins
    rotations: np.ndarray   # (Q, 3, 3)
    axes: np.ndarray        # (Q, 3) world-frame joint axes
    ee_position: np.ndarray
    ee_rotation: np.ndarray

    @property
    def ee_pose(self) -> Pose:
        return Pose(self.ee_position, quat_from_matrix(self.ee_rotation))


def _check_q(model: ManipulatorModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.dof,):
        raise ValueError(f"expected {model.dof} joint positions, got shape {q.shape}")
    return q


def forward_kinematics(model: ManipulatorModel, q) -> LinkFrames:
    """World frames of all joints and the end-effector for joint positions q."""
    q = _check_q(model, q)
    n = model.dof
    positions = np.empty((n, 3))
    rotations = np.empty((n, 3, 3))
    axes = np.empty((n, 3))
    p = model.base_position.copy()
    r = model.base_rotation.copy()
    for i, link in enumerate(model.links):
        p = p + r @ link.offset
        axes[i] = r @ link.axis
        r = r @ rotation_about_axis(link.axis, q[i])
        positions[i] = p
        rotations[i] = r
    ee_position = p + r @ model.ee_offset
    return LinkFrames(positions, rotations, axes, ee_position, r.copy())


def jacobian(model: ManipulatorModel, q, frames: LinkFrames | None = None,
             point=None) -> np.ndarray:
    """Geometric Jacobian (6 x Q, [angular; linear]) at ``point`` (default: end-effector).

    Column i is [axis_i; axis_i x (p - p_i)] for revolute joint i.
    """
    fr = frames if frames is not None else forward_kinematics(model, q)
    p = fr.ee_position if point is None else np.asarray(point, dtype=float)
    jac = np.empty((6, model.dof))
    jac[:3] = fr.axes.T
    jac[3:] = np.cross(fr.axes, p[None, :] - fr.positions).T
    return jac


def _link_velocities(model: ManipulatorModel, qdot, frames: LinkFrames):
    """Angular velocity of each link, velocity of each joint origin, parent angular velocities."""
    n = model.dof
    omegas = np.empty((n, 3))
    origin_vels = np.empty((n, 3))
    parent_omegas = np.empty((n, 3))
    omega = np.zeros(3)
    vel = np.zeros(3)
    prev_p = model.base_position
    for i in range(n):
        vel = vel + np.cross(omega, frames.positions[i] - prev_p)
        parent_omegas[i] = omega
        omega = omega + qdot[i] * frames.axes[i]
        omegas[i] = omega
        origin_vels[i] = vel
        prev_p = frames.positions[i]
    return omegas, origin_vels, parent_omegas


def jacobian_dot(model: ManipulatorModel, q, qdot, frames: LinkFrames | None = None,
                 point=None) -> np.ndarray:
    """Time derivative of the geometric Jacobian along (q, qdot).

    ``point`` is taken as rigidly attached to the terminal link.
    """
    q = _check_q(model, q)
    qdot = np.asarray(qdot, dtype=float)
    fr = frames if frames is not None else forward_kinematics(model, q)
    p = fr.ee_position if point is None else np.asarray(point, dtype=float)
    omegas, origin_vels, parent_omegas = _link_velocities(model, qdot, fr)
    p_dot = origin_vels[-1] + np.cross(omegas[-1], p - fr.positions[-1])
    axis_dots = np.cross(parent_omegas, fr.axes)
    jd = np.empty((6, model.dof))
    jd[:3] = axis_dots.T
    jd[3:] = (
        np.cross(axis_dots, p[None, :] - fr.positions)
        + np.cross(fr.axes, p_dot[None, :] - origin_vels)
    ).T
    return jd


def _spatial_inertia(mass: float, com_world, inertia_world) -> np.ndarray:
    """Spatial inertia about the world origin for [angular; linear] motion vectors."""
    sc = skew(com_world)
    out = np.empty((6, 6))
    out[:3, :3] = inertia_world + mass * (sc @ sc.T)
    out[:3, 3:] = mass * sc
    out[3:, :3] = mass * sc.T
    out[3:, 3:] = mass * np.eye(3)
    return out


def mass_matrix(model: ManipulatorModel, q, frames: LinkFrames | None = None) -> np.ndarray:
    """Joint-space inertia matrix via the composite-rigid-body algorithm."""
    q = _check_q(model, q)
    fr = frames if frames is not None else forward_kinematics(model, q)
    n = model.dof
    subspace = np.empty((n, 6))
    composites = np.empty((n, 6, 6))
    running = np.zeros((6, 6))
    for i in range(n - 1, -1, -1):
        link = model.links[i]
        com_w = fr.positions[i] + fr.rotations[i] @ link.com
        inertia_w = fr.rotations[i] @ link.inertia @ fr.rotations[i].T
        running = running + _spatial_inertia(link.mass, com_w, inertia_w)
        composites[i] = running
    for i in range(n):
        subspace[i, :3] = fr.axes[i]
        subspace[i, 3:] = np.cross(fr.positions[i], fr.axes[i])
    m = np.empty((n, n))
    for j in range(n):
        f = composites[j] @ subspace[j]
        for i in range(j + 1):
            m[i, j] = subspace[i] @ f
            m[j, i] = m[i, j]
    return 0.5 * (m + m.T)


def bias_forces(model: ManipulatorModel, q, qdot, frames: LinkFrames | None = None) -> np.ndarray:
    """Bias torques h(q, qdot): recursive Newton-Euler with zero joint acceleration.

    Gravity enters through the standard base-acceleration trick, so h includes
    the generalised gravity torque.
    """
    q = _check_q(model, q)
    qdot = np.asarray(qdot, dtype=float)
    fr = frames if frames is not None else forward_kinematics(model, q)
    n = model.dof

    omega = np.zeros(3)
    omega_dot = np.zeros(3)
    accel = -model.gravity              # acceleration of the base origin point
    prev_p = model.base_position
    com_acc = np.empty((n, 3))
    coms = np.empty((n, 3))
    omegas = np.empty((n, 3))
    omega_dots = np.empty((n, 3))
    for i in range(n):
        link = model.links[i]
        d = fr.positions[i] - prev_p
        accel = accel + np.cross(omega_dot, d) + np.cross(omega, np.cross(omega, d))
        axis_w = fr.axes[i]
        omega_dot = omega_dot + np.cross(omega, qdot[i] * axis_w)
        omega = omega + qdot[i] * axis_w
        com_w = fr.positions[i] + fr.rotations[i] @ link.com
        rc = com_w - fr.positions[i]
        com_acc[i] = accel + np.cross(omega_dot, rc) + np.cross(omega, np.cross(omega, rc))
        coms[i] = com_w
        omegas[i] = omega
        omega_dots[i] = omega_dot
        prev_p = fr.positions[i]

    h = np.empty(n)
    f_child = np.zeros(3)
    n_child = np.zeros(3)
    child_p = fr.positions[-1]          # placeholder; overwritten before first use
    for i in range(n - 1, -1, -1):
        link = model.links[i]
        inertia_w = fr.rotations[i] @ link.inertia @ fr.rotations[i].T
        force = link.mass * com_acc[i]
        torque = inertia_w @ omega_dots[i] + np.cross(omegas[i], inertia_w @ omegas[i])
        moment = (
            torque
            + n_child
            + np.cross(coms[i] - fr.positions[i], force)
            + np.cross(child_p - fr.positions[i], f_child)
        )
        f_total = force + f_child
        h[i] = fr.axes[i] @ moment
        f_child = f_total
        n_child = moment
        child_p = fr.positions[i]
    return h


@dataclass(frozen=True)
class DynamicsTerms:
    """Per-tick dynamics bundle at one joint state."""

    M: np.ndarray
    h: np.ndarray
    Jx: np.ndarray
    Jx_dot: np.ndarray
    ee_pose: Pose

    @property
    def ee_rotation(self) -> np.ndarray:
        return self.ee_pose.rotation


def dynamics_terms(model: ManipulatorModel, state: JointState,
                   frames: LinkFrames | None = None) -> DynamicsTerms:
    if state.q.shape != (model.dof,):
        raise ValueError(
            f"state dimension {state.q.shape[0]} does not match model dof {model.dof}"
        )
    fr = frames if frames is not None else forward_kinematics(model, state.q)
    return DynamicsTerms(
        M=mass_matrix(model, state.q, fr),
        h=bias_forces(model, state.q, state.qdot, fr),
        Jx=jacobian(model, state.q, fr),
        Jx_dot=jacobian_dot(model, state.q, state.qdot, fr),
        ee_pose=fr.ee_pose,
    )
