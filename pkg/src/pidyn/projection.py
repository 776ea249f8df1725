"""Constraint-space machinery.

Builds, per control tick: the Moore-Penrose pseudoinverse of the constraint
Jacobian, the orthogonal projector P onto its null space and the projector's
time derivative, the invertible constraint-consistent inertia M_c, and the
task-space quantities Lambda_c / h_c used by the impedance controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-10


class ProjectionError(RuntimeError):
    pass


class RankDeficiencyError(ProjectionError):
    """Constraint Jacobian lost row rank (e.g. redundant or vanished contact rows)."""


class SingularInertiaError(ProjectionError):
    """M_c not invertible; indicates an internal consistency failure upstream."""


class TaskSingularityError(ProjectionError):
    """Task directions annihilated by the constraints; Lambda_c undefined."""


def pseudoinverse(a, rank_tol: float = RANK_TOL):
    """Moore-Penrose pseudoinverse by SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    Returns ``(pinv, rank)`` so callers can act on rank deficiency.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0])), 0
    rank = int(np.sum(s > rank_tol * s[0]))
    u, s, vt = u[:, :rank], s[:rank], vt[:rank]
    return (vt.T / s) @ u.T, rank


def projector(jc, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector P = I - pinv(Jc) Jc onto the null space of Jc.

    Raises RankDeficiencyError unless Jc has full row rank.
    """
    jc = np.atleast_2d(np.asarray(jc, dtype=float))
    jc_pinv, rank = pseudoinverse(jc, rank_tol)
    if rank < jc.shape[0]:
        raise RankDeficiencyError(
            f"constraint Jacobian has row rank {rank} < {jc.shape[0]}"
        )
    p = np.eye(jc.shape[1]) - jc_pinv @ jc
    return 0.5 * (p + p.T)


def projector_dot(jc, jc_dot, jc_pinv=None, p=None, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Time derivative of the null-space projector.

    Computed as -(B + B^T) with B = pinv(Jc) Jc_dot P, which for full-row-rank
    Jc is algebraically identical to differentiating P = I - pinv(Jc) Jc with
    the closed-form pinv derivative, and stays valid whenever the rank is
    locally constant.
    """
    jc = np.atleast_2d(np.asarray(jc, dtype=float))
    jc_dot = np.atleast_2d(np.asarray(jc_dot, dtype=float))
    if jc_pinv is None:
        jc_pinv, rank = pseudoinverse(jc, rank_tol)
        if rank < jc.shape[0]:
            raise RankDeficiencyError(
                f"constraint Jacobian has row rank {rank} < {jc.shape[0]}"
            )
    if p is None:
        p = np.eye(jc.shape[1]) - jc_pinv @ jc
    b = jc_pinv @ (jc_dot @ p)
    return -(b + b.T)


def constraint_inertia(m, p):
    """M_c = P M + I - P and its inverse."""
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    mc = p @ m + np.eye(p.shape[0]) - p
    try:
        mc_inv = np.linalg.inv(mc)
    except np.linalg.LinAlgError as exc:
        raise SingularInertiaError("M_c is singular") from exc
    if not np.all(np.isfinite(mc_inv)):
        raise SingularInertiaError("M_c inverse is not finite")
    return mc, mc_inv


def task_space_terms(jx, jx_dot, mc_inv, p, p_dot, h, qdot, cond_limit: float = 1e12):
    """Task-space inertia Lambda_c and bias h_c under the constraint projector.

    Lambda_c = (Jx Mc^-1 P Jx^T)^-1, obtained through a symmetric solve;
    h_c = Lambda_c Jx Mc^-1 (P h - P_dot qdot) - Lambda_c Jx_dot qdot.
    Raises TaskSingularityError when the task matrix is singular beyond
    tolerance (a task direction lies inside the constraint space).
    """
    jx = np.atleast_2d(np.asarray(jx, dtype=float))
    a = jx @ mc_inv @ p @ jx.T
    a = 0.5 * (a + a.T)
    eigs = np.linalg.eigvalsh(a)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > cond_limit:
        raise TaskSingularityError(
            f"task inertia matrix singular (eigenvalues {eigs[0]:.3e}..{eigs[-1]:.3e})"
        )
    lambda_c = np.linalg.solve(a, np.eye(a.shape[0]))
    lambda_c = 0.5 * (lambda_c + lambda_c.T)
    h_c = lambda_c @ (jx @ (mc_inv @ (p @ h - p_dot @ qdot)) - jx_dot @ qdot)
    return lambda_c, h_c


@dataclass(frozen=True)
class ProjectionState:
    """Immutable constraint-space snapshot for one control tick."""

    P: np.ndarray
    P_dot: np.ndarray
    Jc_pinv: np.ndarray
    rank: int
    Mc: np.ndarray
    Mc_inv: np.ndarray
    Lambda_c: np.ndarray | None = None
    h_c: np.ndarray | None = None


def projection_state(jc, jc_dot, m, jx=None, jx_dot=None, h=None, qdot=None,
                     rank_tol: float = RANK_TOL) -> ProjectionState:
    """Assemble the full per-tick snapshot; task terms only when a task Jacobian is given."""
    jc = np.atleast_2d(np.asarray(jc, dtype=float))
    jc_pinv, rank = pseudoinverse(jc, rank_tol)
    if rank < jc.shape[0]:
        raise RankDeficiencyError(f"constraint Jacobian has row rank {rank} < {jc.shape[0]}")
    p = np.eye(jc.shape[1]) - jc_pinv @ jc
    p = 0.5 * (p + p.T)
    p_dot = projector_dot(jc, jc_dot, jc_pinv=jc_pinv, p=p)
    mc, mc_inv = constraint_inertia(m, p)
    lambda_c = h_c = None
    if jx is not None:
        lambda_c, h_c = task_space_terms(jx, jx_dot, mc_inv, p, p_dot, h, qdot)
    return ProjectionState(p, p_dot, jc_pinv, rank, mc, mc_inv, lambda_c, h_c)
