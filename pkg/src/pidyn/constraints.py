"""Per-tick constraint assembly for the two supported contact situations.

A constraint model turns the arms' kinematic snapshot into (a) the constraint
rows consumed by the projection module, (b) the full wrench-coordinate rows
used for contact-wrench bookkeeping, and (c) the task frame the impedance
controller acts on (end-effector for the surface case, grasped-object frame
for the multi-arm case).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LinkFrames
from .grasp import (SWAP_HALVES, ContactFrame, ConstraintJacobian, GraspMap, _block_diag,
                    grasp_map, multiarm_constraint_jacobian)
from .rotations import Pose, skew
from .wrench_qp import ContactSpec, FrictionParams

# row indices into the [angular; linear] 6-vector
_WX, _WY, _WZ, _VX, _VY, _VZ = range(6)


@dataclass(frozen=True)
class ConstraintTick:
    """Everything the controller and simulator need about the constraint at one state.

    ``grasp_pinv`` (G^+, grasp scenarios only) converts an object-level load
    into its per-contact external share; the constraint-channel wrenches
    F_e - F_c carry only the internal (squeeze) components, so the physical
    contact wrench is their sum.
    """

    jacobian: ConstraintJacobian
    contacts: tuple                 # ContactSpec per contact
    task_pose: Pose
    task_twist: np.ndarray          # 6, [angular; linear]
    task_jac: np.ndarray            # 6 x sum(Q_i), world frame
    task_jac_dot: np.ndarray
    contact_positions: tuple = ()
    grasp_pinv: np.ndarray | None = None


class SurfaceContactConstraint:
    """Hand pressing on a horizontal rigid surface.

    Constrains the end-effector's vertical translation and the two rolling
    rotations; rows are ordered to pair with the contact wrench
    (f_normal, m_x, m_y) in the surface frame (z up, toward the hand).
    """

    rows = (_VZ, _WX, _WY)
    components = (2, 3, 4)          # fz, mx, my

    def __init__(self, friction: FrictionParams):
        self.friction = friction
        self._spec = ContactSpec(
            rotation=np.eye(3),
            components=self.components,
            friction=friction,
            local_components=True,
        )

    def velocity_constraint(self, frames: list[LinkFrames], jacobians) -> np.ndarray:
        """Constraint rows at this configuration (no velocity terms)."""
        (jx,) = jacobians
        return jx[list(self.rows)]

    def evaluate(self, frames: list[LinkFrames], jacobians, jacobian_dots,
                 qdots) -> ConstraintTick:
        (fr,) = frames
        (jx,) = jacobians
        (jx_dot,) = jacobian_dots
        (qdot,) = qdots
        rows = list(self.rows)
        jc = jx[rows]
        jc_dot = jx_dot[rows]
        jacobian = ConstraintJacobian(
            jc=jc, jc_dot=jc_dot, wrench_jac=jc, wrench_jac_dot=jc_dot, rank=jc.shape[0]
        )
        return ConstraintTick(
            jacobian=jacobian,
            contacts=(self._spec,),
            task_pose=fr.ee_pose,
            task_twist=jx @ qdot,
            task_jac=jx,
            task_jac_dot=jx_dot,
            contact_positions=(fr.ee_position.copy(),),
        )

    def position_error(self, frames: list[LinkFrames], reference_pose: Pose) -> np.ndarray:
        """Holonomic constraint drift (z height, roll, pitch) for position stabilization."""
        (fr,) = frames
        rel = fr.ee_rotation @ reference_pose.rotation.T
        # first-order roll/pitch of the relative rotation
        return np.array(
            [
                fr.ee_position[2] - reference_pose.position[2],
                0.5 * (rel[2, 1] - rel[1, 2]),
                0.5 * (rel[0, 2] - rel[2, 0]),
            ]
        )


def _transport(from_point, to_point) -> np.ndarray:
    """6x6 twist transport for [angular; linear] vectors between rigidly connected points."""
    t = np.eye(6)
    t[3:, :3] = skew(np.asarray(from_point) - np.asarray(to_point))
    return t


class GraspConstraint:
    """Force-closed multi-arm grasp of a single rigid object.

    Contacts coincide with the end-effector frames and the object is anchored
    to the first arm's hand; geometry (relative transforms, contact axes,
    wrench offsets) is captured once from the initial configuration.
    """

    def __init__(self, friction: FrictionParams, grasp_offsets=None, com_offset=np.zeros(3)):
        self.friction = friction
        self.grasp_offsets = None if grasp_offsets is None else [
            np.asarray(o, dtype=float) for o in grasp_offsets
        ]
        self.com_offset = np.asarray(com_offset, dtype=float)
        self._anchor: Pose | None = None            # object pose in arm-0 EE frame
        self._contact_rotations_local: list | None = None

    @property
    def initialized(self) -> bool:
        return self._anchor is not None

    def initialize(self, frames: list[LinkFrames]):
        """Capture the grasp geometry from the current end-effector poses.

        The object COM sits at the mean of (contact - nominal grasp offset);
        with hands exactly at the nominal grasp points this is the nominal
        COM, otherwise the small placement error is shared between hands.
        """
        positions = [fr.ee_position for fr in frames]
        if self.grasp_offsets is not None:
            if len(self.grasp_offsets) != len(frames):
                raise ValueError("one grasp offset required per arm")
            com = np.mean([p - o for p, o in zip(positions, self.grasp_offsets)], axis=0)
        else:
            com = np.mean(positions, axis=0)
        com = com + self.com_offset
        object_pose = Pose.from_rotation(com, np.eye(3))
        self._anchor = frames[0].ee_pose.inverse().compose(object_pose)
        self._contact_rotations_local = []
        for fr in frames:
            rot = self._contact_rotation(fr.ee_position - com)
            self._contact_rotations_local.append(object_pose.rotation.T @ rot)

    @staticmethod
    def _contact_rotation(outward) -> np.ndarray:
        """Deterministic contact axes: z along the outward object normal."""
        z = np.asarray(outward, dtype=float)
        norm = np.linalg.norm(z)
        if norm < 1e-9:
            raise ValueError("contact coincides with the object centre of mass")
        z = z / norm
        up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        x = up - (up @ z) * z
        x = x / np.linalg.norm(x)
        return np.column_stack([x, np.cross(z, x), z])

    def object_pose(self, frames: list[LinkFrames]) -> Pose:
        return frames[0].ee_pose.compose(self._anchor)

    def velocity_constraint(self, frames: list[LinkFrames], jacobians) -> np.ndarray:
        """Constraint rows at this configuration (no velocity terms).

        Used for the fresh-geometry velocity projection at the start of every
        tick; full row rank is not needed there, the pseudoinverse handles it.
        """
        if not self.initialized:
            self.initialize(frames)
        obj = self.object_pose(frames)
        contact_frames = []
        for i, fr in enumerate(frames):
            r = fr.ee_position - obj.position
            rot = obj.rotation @ self._contact_rotations_local[i]
            contact_frames.append(ContactFrame(fr.ee_position, rot, r))
        gmap = grasp_map(contact_frames)
        return gmap.N @ _block_diag([SWAP_HALVES @ np.asarray(j, dtype=float)
                                     for j in jacobians])

    def evaluate(self, frames: list[LinkFrames], jacobians, jacobian_dots,
                 qdots) -> ConstraintTick:
        if not self.initialized:
            self.initialize(frames)
        obj = self.object_pose(frames)
        obj_rot = obj.rotation

        n_arms = len(frames)
        dofs = [j.shape[1] for j in jacobians]
        total = sum(dofs)
        col_ofs = np.concatenate([[0], np.cumsum(dofs)])

        ee_twists = [j @ qd for j, qd in zip(jacobians, qdots)]
        obj_twist = _transport(frames[0].ee_position, obj.position) @ ee_twists[0]
        obj_vel = obj_twist[3:]

        contact_frames = []
        specs = []
        r_dots = []
        for i, fr in enumerate(frames):
            r = fr.ee_position - obj.position
            rot = obj_rot @ self._contact_rotations_local[i]
            contact_frames.append(ContactFrame(fr.ee_position, rot, r))
            specs.append(ContactSpec(rotation=rot, components=(0, 1, 2, 3, 4, 5),
                                     friction=self.friction))
            r_dots.append(ee_twists[i][3:] - obj_vel)

        gmap = grasp_map(contact_frames)
        jacobian = multiarm_constraint_jacobian(gmap, jacobians, jacobian_dots, r_dots)

        # Object task Jacobian: average of the contact-transported arm Jacobians;
        # any convex combination agrees on the constraint manifold.
        task_jac = np.zeros((6, total))
        task_jac_dot = np.zeros((6, total))
        for i, fr in enumerate(frames):
            t = _transport(fr.ee_position, obj.position)
            t_dot = np.zeros((6, 6))
            t_dot[3:, :3] = skew(ee_twists[i][3:] - obj_vel)
            sl = slice(col_ofs[i], col_ofs[i + 1])
            task_jac[:, sl] = t @ jacobians[i]
            task_jac_dot[:, sl] = t @ jacobian_dots[i] + t_dot @ jacobians[i]
        task_jac /= n_arms
        task_jac_dot /= n_arms

        return ConstraintTick(
            jacobian=jacobian,
            contacts=tuple(specs),
            task_pose=obj,
            task_twist=obj_twist,
            task_jac=task_jac,
            task_jac_dot=task_jac_dot,
            contact_positions=tuple(fr.ee_position.copy() for fr in frames),
            grasp_pinv=gmap.G_pinv,
        )
