"""Grasp maps, internal wrenches, and the multi-arm constraint Jacobian.

Contact wrenches are stacked [force; moment] per contact, in world
coordinates, matching the grasp-matrix block form. Arm Jacobians arrive in
the package-wide [angular; linear] twist ordering and are reordered here to
[linear; angular] rows so that J^T pairs with [force; moment] wrenches; this
is the single place the two conventions meet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import RANK_TOL, RankDeficiencyError, projector_dot, pseudoinverse
from .rotations import skew

# Reorders a 6-vector between [angular; linear] and [linear; angular].
SWAP_HALVES = np.block(
    [[np.zeros((3, 3)), np.eye(3)], [np.eye(3), np.zeros((3, 3))]]
)


@dataclass(frozen=True)
class ContactFrame:
    """One contact: world position, contact axes, and offset from the object COM.

    The local z axis is the contact normal, pointing from the object surface
    toward the hand (the direction the contact can push the robot).
    """

    position: np.ndarray
    rotation: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        rot = self.rotation
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-10 or np.linalg.det(rot) < 0.0:
            raise ValueError("contact rotation must be orthonormal with det +1")


def grasp_matrix(r) -> np.ndarray:
    """6x6 wrench transport [[I, 0], [skew(r), I]] from a contact to the object COM.

    Acts on [force; moment]: net force is passed through, net moment picks up
    r x f with r from the COM to the contact point.
    """
    g = np.eye(6)
    g[3:, :3] = skew(r)
    return g


def grasp_matrix_dot(r_dot) -> np.ndarray:
    g = np.zeros((6, 6))
    g[3:, :3] = skew(r_dot)
    return g


@dataclass(frozen=True)
class GraspMap:
    """Horizontal concatenation of per-contact grasp matrices and its null projector."""

    contacts: tuple
    matrices: tuple
    G: np.ndarray
    G_pinv: np.ndarray
    N: np.ndarray

    @property
    def num_contacts(self) -> int:
        return len(self.contacts)

    def external_share(self, object_wrench) -> np.ndarray:
        """Minimum-norm per-contact wrenches (on the robot) balancing an object load.

        ``object_wrench`` is the [force; moment] the environment and the
        object's own dynamics exert at the COM; the hands feel its reaction.
        This component lies in range(G^T), orthogonal to every internal
        wrench, and cannot be altered by constraint-space torques.
        """
        return self.G_pinv @ np.asarray(object_wrench, dtype=float)


def grasp_map(contacts, rank_tol: float = RANK_TOL) -> GraspMap:
    """Build G = [G_1 ... G_K] and N = I - pinv(G) G.

    Any wrench in range(N) produces zero net wrench on the object (a pure
    internal squeeze).
    """
    contacts = tuple(contacts)
    if not contacts:
        raise ValueError("grasp map needs at least one contact")
    mats = tuple(grasp_matrix(c.r) for c in contacts)
    g = np.hstack(mats)
    g_pinv, _ = pseudoinverse(g, rank_tol)
    n = np.eye(g.shape[1]) - g_pinv @ g
    return GraspMap(contacts, mats, g, g_pinv, 0.5 * (n + n.T))


def _block_diag(blocks) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


@dataclass(frozen=True)
class ConstraintJacobian:
    """Constraint rows for the projection module plus the full wrench-space rows.

    ``jc`` (k x sum(Q_i)) has full row rank and drives the projector;
    ``wrench_jac`` keeps all 6K rows in contact-wrench coordinates so that
    wrench_jac^T maps stacked [force; moment] contact wrenches to joint
    torques. Both span the same row space.
    """

    jc: np.ndarray
    jc_dot: np.ndarray
    wrench_jac: np.ndarray
    wrench_jac_dot: np.ndarray
    rank: int

    @property
    def k(self) -> int:
        return self.rank


def multiarm_constraint_jacobian(gmap: GraspMap, arm_jacobians, arm_jacobian_dots,
                                 r_dots, rank_tol: float = RANK_TOL) -> ConstraintJacobian:
    """Constraint Jacobian of a force-closed multi-arm grasp.

    Jc = (I - pinv(G) G) blockdiag(J_1 ... J_K), with the arm Jacobians taken
    at the contact points in world frame, [angular; linear] rows. The product
    has at most 6(K-1) independent rows; the returned ``jc`` is rebuilt from
    the leading singular directions so downstream code sees full row rank.
    Its paired ``jc_dot`` drops the rotation rate of that singular basis,
    which is exact in every use because the dropped term carries W P = 0.
    """
    jacs = [SWAP_HALVES @ np.asarray(j, dtype=float) for j in arm_jacobians]
    jac_dots = [SWAP_HALVES @ np.asarray(j, dtype=float) for j in arm_jacobian_dots]
    if len(jacs) != gmap.num_contacts:
        raise ValueError("one contact-point Jacobian required per contact")
    blk = _block_diag(jacs)
    blk_dot = _block_diag(jac_dots)
    g_dot = np.hstack([grasp_matrix_dot(rd) for rd in r_dots])
    n_dot = projector_dot(gmap.G, g_dot, rank_tol=rank_tol)
    w = gmap.N @ blk
    w_dot = n_dot @ blk + gmap.N @ blk_dot

    u, s, vt = np.linalg.svd(w, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise RankDeficiencyError("multi-arm constraint Jacobian is identically zero")
    rank = int(np.sum(s > rank_tol * s[0]))
    if rank == 0:
        raise RankDeficiencyError("multi-arm constraint Jacobian has rank zero")
    basis = u[:, :rank]
    return ConstraintJacobian(
        jc=basis.T @ w,
        jc_dot=basis.T @ w_dot,
        wrench_jac=w,
        wrench_jac_dot=w_dot,
        rank=rank,
    )
