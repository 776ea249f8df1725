"""SO(3) and pose helpers shared across the library.

Conventions, fixed once for the whole package:

* rotation matrices map local coordinates into the parent/world frame
* quaternions are scalar-first ``(w, x, y, z)`` and kept at unit norm
* 6-vectors (twists, task-space wrenches) are ordered ``[angular; linear]``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def skew(r) -> np.ndarray:
    """3x3 matrix S with ``S @ v == np.cross(r, v)``."""
    x, y, z = np.asarray(r, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def quat_from_matrix(r) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix (Shepperd's method)."""
    m = np.asarray(r, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = 2.0 * np.sqrt(t + 1.0)
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0))
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return q / np.linalg.norm(q)


def matrix_from_quat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        return np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]) / np.sqrt(
            1.0 + 0.25 * angle * angle
        )
    axis = r / angle
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def rotvec_from_quat(q) -> np.ndarray:
    """Principal rotation vector (magnitude <= pi) of a unit quaternion."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    vec_norm = np.linalg.norm(q[1:])
    if vec_norm < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(vec_norm, q[0])
    return (angle / vec_norm) * q[1:]


def rotvec_from_matrix(r) -> np.ndarray:
    return rotvec_from_quat(quat_from_matrix(r))


def rotation_error(rotation, desired) -> np.ndarray:
    """World-frame rotation vector taking ``desired`` onto ``rotation``.

    Equals R_d * log(R_d^T R): the relative rotation expressed in world axes.
    """
    return rotvec_from_matrix(np.asarray(rotation) @ np.asarray(desired).T)


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: position plus unit quaternion (w, x, y, z)."""

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.quaternion, dtype=float)
        object.__setattr__(self, "quaternion", q / np.linalg.norm(q))

    @property
    def rotation(self) -> np.ndarray:
        return matrix_from_quat(self.quaternion)

    @staticmethod
    def from_rotation(position, rotation) -> "Pose":
        return Pose(np.asarray(position, dtype=float), quat_from_matrix(rotation))

    def transform_point(self, point) -> np.ndarray:
        return self.position + self.rotation @ np.asarray(point, dtype=float)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.position + self.rotation @ other.position,
            quat_mul(self.quaternion, other.quaternion),
        )

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.quaternion)
        return Pose(-(matrix_from_quat(qi) @ self.position), qi)


def pose_error(pose: Pose, desired: Pose) -> np.ndarray:
    """6-vector [rotation error; position error], world frame, [angular; linear]."""
    return np.concatenate(
        [rotation_error(pose.rotation, desired.rotation), pose.position - desired.position]
    )
