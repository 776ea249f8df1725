"""Desired task trajectories with analytic derivatives.

The two circular primitives mirror the evaluation tasks: wiping on a
horizontal surface (circle in x, y plus a fixed yaw) and transporting an
object on a circle in the y, z plane. Scenario trajectories wrap them with a
smooth speed ramp so runs start from rest without a velocity jump.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotations import Pose, quat_from_rotvec, quat_mul

# indices into [angular; linear] 6-vectors
_WZ, _VX, _VY, _VZ = 2, 3, 4, 5


def trajectory_single_arm_wipe(radius: float, speed: float, t: float):
    """Planar wiping reference: (x, y, yaw) = (r cos(st), r sin(st), 0).

    Returns position, velocity and acceleration of the 3-vector task.
    """
    a = speed * t
    c, s = np.cos(a), np.sin(a)
    x = np.array([radius * c, radius * s, 0.0])
    xd = np.array([-radius * speed * s, radius * speed * c, 0.0])
    xdd = np.array([-radius * speed**2 * c, -radius * speed**2 * s, 0.0])
    return x, xd, xdd


def trajectory_dual_arm_circle(radius: float, speed: float, t: float):
    """Object transport reference in the y, z plane: (0, r cos(st), r sin(st))."""
    a = speed * t
    c, s = np.cos(a), np.sin(a)
    x = np.array([0.0, radius * c, radius * s])
    xd = np.array([0.0, -radius * speed * s, radius * speed * c])
    xdd = np.array([0.0, -radius * speed**2 * c, -radius * speed**2 * s])
    return x, xd, xdd


def _phase(speed: float, t: float, ramp: float):
    """Angle, rate and acceleration of s*t with a C2 smooth-start ramp."""
    if ramp <= 0.0 or t >= ramp:
        extra = 0.5 * ramp if ramp > 0.0 else 0.0
        return speed * (t - extra), speed, 0.0
    u = t / ramp
    alpha = u * u * (3.0 - 2.0 * u)
    alpha_dot = 6.0 * u * (1.0 - u) / ramp
    theta = speed * ramp * (u**3 - 0.5 * u**4)
    return theta, speed * alpha, speed * alpha_dot


@dataclass(frozen=True)
class Desired:
    pose: Pose
    twist: np.ndarray      # 6, [angular; linear]
    acceleration: np.ndarray


class HoldTrajectory:
    """Constant desired pose."""

    def __init__(self, pose: Pose):
        self.pose = pose

    def at(self, t: float) -> Desired:
        return Desired(self.pose, np.zeros(6), np.zeros(6))


class CircleTrajectory:
    """Circle through the starting pose with fixed orientation except optional yaw.

    ``plane='xy'`` runs the wiping pattern (position in x, y; the third task
    channel is yaw, held at the starting value); ``plane='yz'`` runs the
    transport pattern with the full orientation held. The circle is placed so
    the reference starts exactly at ``start_pose``.
    """

    def __init__(self, start_pose: Pose, radius: float, speed: float, plane: str = "xy",
                 center=None, ramp_time: float = 0.0):
        if radius <= 0.0:
            raise ValueError("circle radius must be positive")
        if plane not in ("xy", "yz"):
            raise ValueError(f"unknown circle plane '{plane}'")
        self.radius = radius
        self.speed = speed
        self.plane = plane
        self.ramp_time = ramp_time
        self.start_pose = start_pose
        if center is not None:
            self.center = np.asarray(center, dtype=float)
        else:
            offset = np.array([radius, 0.0, 0.0]) if plane == "xy" else np.array(
                [0.0, radius, 0.0])
            self.center = start_pose.position - offset

    def at(self, t: float) -> Desired:
        theta, theta_dot, theta_ddot = _phase(self.speed, t, self.ramp_time)
        c, s = np.cos(theta), np.sin(theta)
        radial = np.array([c, s])
        tangent = np.array([-s, c])
        pos2 = self.radius * radial
        vel2 = self.radius * theta_dot * tangent
        acc2 = self.radius * (theta_ddot * tangent - theta_dot**2 * radial)

        position = self.center.copy()
        twist = np.zeros(6)
        accel = np.zeros(6)
        if self.plane == "xy":
            position[0] += pos2[0]
            position[1] += pos2[1]
            twist[_VX], twist[_VY] = vel2
            accel[_VX], accel[_VY] = acc2
        else:
            position[1] += pos2[0]
            position[2] += pos2[1]
            twist[_VY], twist[_VZ] = vel2
            accel[_VY], accel[_VZ] = acc2
        return Desired(Pose(position, self.start_pose.quaternion), twist, accel)


class YawCircleTrajectory(CircleTrajectory):
    """Wiping circle with an explicit desired yaw profile about world z."""

    def __init__(self, start_pose: Pose, radius: float, speed: float,
                 yaw: float = 0.0, center=None, ramp_time: float = 0.0):
        super().__init__(start_pose, radius, speed, plane="xy", center=center,
                         ramp_time=ramp_time)
        self.yaw = yaw

    def at(self, t: float) -> Desired:
        base = super().at(t)
        if self.yaw == 0.0:
            return base
        quat = quat_mul(quat_from_rotvec([0.0, 0.0, self.yaw]), self.start_pose.quaternion)
        return Desired(Pose(base.pose.position, quat), base.twist, base.acceleration)
