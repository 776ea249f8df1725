"""Constraint-consistent Cartesian impedance control.

The control force realizes a prescribed mass-spring-damper disturbance
response at the operational point without measuring external forces, by
keeping the desired inertia equal to the constraint-consistent task inertia.
Task vectors may cover all six directions or any commanded subset (e.g. x, y
and yaw for a hand sliding on a surface); a TaskSpace picks the rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotations import Pose, pose_error


def _check_spd(m, label: str):
    m = np.asarray(m, dtype=float)
    if np.max(np.abs(m - m.T)) > 1e-10 or np.linalg.eigvalsh(m)[0] <= 0.0:
        raise ValueError(f"{label} must be symmetric positive definite")
    return m


@dataclass(frozen=True)
class TaskSpace:
    """Commanded directions as indices into [angular(3); linear(3)] vectors."""

    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if any(i < 0 or i > 5 for i in self.indices):
            raise ValueError("task indices must lie in 0..5")

    @property
    def dim(self) -> int:
        return len(self.indices)

    def reduce_rows(self, m6) -> np.ndarray:
        return np.asarray(m6, dtype=float)[list(self.indices)]

    def reduce(self, v6) -> np.ndarray:
        return np.asarray(v6, dtype=float)[list(self.indices)]


TASK_FULL = TaskSpace((0, 1, 2, 3, 4, 5))
# x translation, y translation, yaw: a planar task sliding on a horizontal surface.
TASK_PLANAR_XY_YAW = TaskSpace((3, 4, 2))


@dataclass(frozen=True)
class ImpedanceGains:
    """Desired stiffness and damping; the desired inertia is implicit (= Lambda_c)."""

    stiffness: np.ndarray
    damping: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "stiffness", _check_spd(self.stiffness, "stiffness"))
        object.__setattr__(self, "damping", _check_spd(self.damping, "damping"))

    @staticmethod
    def from_diagonals(stiffness_diag, damping_diag) -> "ImpedanceGains":
        return ImpedanceGains(np.diag(np.asarray(stiffness_diag, dtype=float)),
                              np.diag(np.asarray(damping_diag, dtype=float)))


@dataclass(frozen=True)
class TaskState:
    """Current vs desired task motion, reduced to the commanded directions.

    ``err_pos`` uses the rotation vector of the relative orientation for the
    angular components (magnitude <= pi by construction).
    """

    pose: Pose
    desired_pose: Pose
    twist: np.ndarray
    desired_twist: np.ndarray
    desired_acceleration: np.ndarray
    err_pos: np.ndarray
    err_vel: np.ndarray


def make_task_state(space: TaskSpace, pose: Pose, twist6, desired_pose: Pose,
                    desired_twist6, desired_acceleration6) -> TaskState:
    twist6 = np.asarray(twist6, dtype=float)
    desired_twist6 = np.asarray(desired_twist6, dtype=float)
    return TaskState(
        pose=pose,
        desired_pose=desired_pose,
        twist=space.reduce(twist6),
        desired_twist=space.reduce(desired_twist6),
        desired_acceleration=space.reduce(np.asarray(desired_acceleration6, dtype=float)),
        err_pos=space.reduce(pose_error(pose, desired_pose)),
        err_vel=space.reduce(twist6 - desired_twist6),
    )


def control_force(task: TaskState, gains: ImpedanceGains, lambda_c, h_c) -> np.ndarray:
    """Simplified impedance control force (no inertia shaping).

    F = h_c + Lambda_c xdd_d - D_d err_vel - K_d err_pos. Feeding this back
    through the constrained dynamics yields the desired impedance response
    without any external-force measurement.
    """
    return (
        np.asarray(h_c, dtype=float)
        + np.asarray(lambda_c, dtype=float) @ task.desired_acceleration
        - gains.damping @ task.err_vel
        - gains.stiffness @ task.err_pos
    )


def motion_torque(force, jx, p) -> np.ndarray:
    """Map a task force into motion-space joint torques: tau = P Jx^T F."""
    return np.asarray(p) @ (np.asarray(jx).T @ np.asarray(force, dtype=float))


def posture_torque(p, jx, lambda_c, mc_inv, h, qdot, damping: float) -> np.ndarray:
    """Task-neutral torque for the redundant motion directions.

    Compensates bias forces and adds viscous damping in the motion space,
    filtered so the resulting task acceleration is exactly zero:
    Phi(w) = P w - P Jx^T Lambda_c Jx Mc^-1 P w. Without it the self-motion
    dof is an undamped pendulum (no joint friction in the model) and its
    oscillation pollutes every task-level signal.
    """
    w = np.asarray(h, dtype=float) - damping * np.asarray(qdot, dtype=float)
    base = np.asarray(p) @ w
    task_part = np.asarray(p) @ (np.asarray(jx).T @ (
        np.asarray(lambda_c) @ (np.asarray(jx) @ (np.asarray(mc_inv) @ base))))
    return base - task_part


@dataclass(frozen=True)
class ExternalWrenchEstimate:
    wrench: np.ndarray
    quasi_static: bool


def estimate_external_wrench(task: TaskState, gains: ImpedanceGains, lambda_c,
                             acceleration=None, quasi_static: bool = True
                             ) -> ExternalWrenchEstimate:
    """Estimate the external task wrench from the closed-loop displacement.

    Quasi-static mode (default) reads F_x = K_d err_pos + D_d err_vel; the
    full mode adds Lambda_c (xdd - xdd_d) when a measured task acceleration
    is supplied. Differentiated accelerations are noisy, hence the default.
    """
    wrench = gains.stiffness @ task.err_pos + gains.damping @ task.err_vel
    if not quasi_static:
        if acceleration is None:
            raise ValueError("full-mode estimate requires the task acceleration")
        wrench = wrench + np.asarray(lambda_c) @ (
            np.asarray(acceleration, dtype=float) - task.desired_acceleration
        )
    return ExternalWrenchEstimate(wrench=wrench, quasi_static=quasi_static)


def full_impedance_force_with_inertia_shaping(task: TaskState, gains: ImpedanceGains,
                                              lambda_d, lambda_c, h_c,
                                              fx_measured) -> np.ndarray:
    """General impedance law with an explicit desired inertia Lambda_d.

    Requires measured external force feedback through (Lambda_c Lambda_d^-1 - I);
    reduces exactly to :func:`control_force` when Lambda_d = Lambda_c. Kept for
    verification, not used in the production control path.
    """
    lambda_d = _check_spd(lambda_d, "desired inertia")
    lambda_c = np.asarray(lambda_c, dtype=float)
    scale = lambda_c @ np.linalg.inv(lambda_d)
    return (
        np.asarray(h_c, dtype=float)
        + lambda_c @ task.desired_acceleration
        - scale @ (gains.damping @ task.err_vel + gains.stiffness @ task.err_pos)
        + (scale - np.eye(scale.shape[0])) @ np.asarray(fx_measured, dtype=float)
    )
