"""Constrained-space torque synthesis.

Splits the contact wrench as lambda = F_e - F_c, where F_e aggregates every
external effect felt in the constrained space and F_c is the commanded part,
then picks the F_c of minimum squared constraint torque subject to unilateral,
friction-cone (inscribed 8-edge pyramid) and contact-moment limits, via a
dense primal active-set QP that warm-starts across control ticks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .impedance import ExternalWrenchEstimate

WRENCH_COMPONENTS = ("fx", "fy", "fz", "mx", "my", "mz")
_NORMAL = WRENCH_COMPONENTS.index("fz")


class QPError(RuntimeError):
    pass


class QPInfeasibleError(QPError):
    """No commanded wrench satisfies the contact constraints (e.g. a required pull)."""


class QPMaxIterationsError(QPError):
    pass


@dataclass(frozen=True)
class FrictionParams:
    """Contact friction model: Coulomb mu, torsional gamma (m), patch half-extents (m)."""

    mu: float
    gamma: float
    delta_x: float
    delta_y: float

    def __post_init__(self):
        for name in ("mu", "gamma", "delta_x", "delta_y"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"friction parameter {name} must be strictly positive")

    def scaled(self, factor: float) -> "FrictionParams":
        return FrictionParams(self.mu * factor, self.gamma * factor,
                              self.delta_x * factor, self.delta_y * factor)


def linearize_friction_cone(params: FrictionParams, edges: int = 8) -> np.ndarray:
    """Rows C with C @ [f; m] <= 0 in the local contact frame (z = normal).

    The tangential rows cos(t_j) fx + sin(t_j) fy <= mu cos(pi/edges) fz form
    an inscribed pyramid: every point satisfying them lies inside the exact
    quadratic cone. Includes fz >= 0 and the torsional/patch moment limits.
    """
    if edges < 3:
        raise ValueError("friction cone linearization needs at least 3 edges")
    shrink = params.mu * np.cos(np.pi / edges)
    rows = []
    for j in range(edges):
        t = 2.0 * np.pi * j / edges
        rows.append([np.cos(t), np.sin(t), -shrink, 0.0, 0.0, 0.0])
    rows.append([0.0, 0.0, -1.0, 0.0, 0.0, 0.0])                   # fz >= 0
    for sign in (1.0, -1.0):
        rows.append([0.0, 0.0, -params.gamma, 0.0, 0.0, sign])     # |mz| <= gamma fz
        rows.append([0.0, 0.0, -params.delta_x, sign, 0.0, 0.0])   # |mx| <= dx fz
        rows.append([0.0, 0.0, -params.delta_y, 0.0, sign, 0.0])   # |my| <= dy fz
    return np.array(rows)


def exact_cone_margins(wrench_local, params: FrictionParams) -> np.ndarray:
    """Margins of the exact (quadratic) contact constraints; >= 0 means satisfied."""
    f = np.asarray(wrench_local, dtype=float)
    fx, fy, fz, mx, my, mz = f
    return np.array(
        [
            fz,
            params.mu * fz - np.hypot(fx, fy),
            params.gamma * fz - abs(mz),
            params.delta_x * fz - abs(mx),
            params.delta_y * fz - abs(my),
        ]
    )


@dataclass(frozen=True)
class ContactSpec:
    """How one contact's rows of the wrench Jacobian map to physical wrench components.

    ``components`` indexes WRENCH_COMPONENTS; ``rotation`` takes the contact
    frame into the frame the components are expressed in (world for grasp
    contacts). ``local_components`` marks rows already written in contact
    axes, as the surface-contact constraint produces them.
    """

    rotation: np.ndarray
    components: tuple
    friction: FrictionParams
    local_components: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "components", tuple(int(c) for c in self.components))
        if _NORMAL not in self.components:
            raise ValueError("every contact must expose its normal force component")

    @property
    def dim(self) -> int:
        return len(self.components)

    def selection(self) -> np.ndarray:
        s = np.zeros((6, self.dim))
        for col, comp in enumerate(self.components):
            s[comp, col] = 1.0
        return s

    def to_local(self) -> np.ndarray:
        """Matrix taking this contact's wrench block to the full local 6-vector."""
        s = self.selection()
        if self.local_components:
            return s
        rot6 = np.zeros((6, 6))
        rot6[:3, :3] = self.rotation.T
        rot6[3:, 3:] = self.rotation.T
        return rot6 @ s


def _dedupe_rows(rows: np.ndarray, rhs: np.ndarray):
    """Drop zero rows; for parallel duplicates keep the tightest bound.

    Masked contacts collapse many cone rows onto each other (e.g. all eight
    tangential edges of a contact without tangential force components).
    """
    kept: dict = {}
    order = []
    for row, d in zip(rows, rhs):
        norm = np.linalg.norm(row)
        if norm < 1e-12:
            continue
        key = tuple(np.round(row / norm, 12))
        if key not in kept:
            kept[key] = (row, d)
            order.append(key)
        elif d / norm < kept[key][1] / np.linalg.norm(kept[key][0]):
            kept[key] = (row, d)
    if not order:
        return np.zeros((0, rows.shape[1])), np.zeros(0)
    out_rows = np.array([kept[k][0] for k in order])
    out_rhs = np.array([kept[k][1] for k in order])
    return out_rows, out_rhs


def cone_constraint_matrix(contacts, edges: int = 8, margin_scale: float = 1.0,
                           preload: float = 0.0):
    """Stacked rows (C, d) with C @ lambda <= d over the full contact-wrench vector.

    ``margin_scale`` < 1 tightens every friction limit inside the solver,
    buying robustness against external-wrench estimation error; checks against
    the physical cone always use the unscaled parameters. ``preload`` > 0
    demands a minimum normal force at every contact (a grasp squeeze held
    even before any disturbance is detected).
    """
    blocks = []
    rhs = []
    offset = 0
    total = sum(c.dim for c in contacts)
    for contact in contacts:
        params = contact.friction.scaled(margin_scale) if margin_scale != 1.0 else contact.friction
        local = linearize_friction_cone(params, edges)
        d_local = np.zeros(local.shape[0])
        if preload > 0.0:
            normal_row = np.zeros((1, 6))
            normal_row[0, _NORMAL] = -1.0
            local = np.vstack([local, normal_row])
            d_local = np.concatenate([d_local, [-preload]])
        rows, d_rows = _dedupe_rows(local @ contact.to_local(), d_local)
        full = np.zeros((rows.shape[0], total))
        full[:, offset:offset + contact.dim] = rows
        blocks.append(full)
        rhs.append(d_rows)
        offset += contact.dim
    return np.vstack(blocks), np.concatenate(rhs)


def qp_inequalities(cone_matrix: np.ndarray, f_e: np.ndarray, cone_rhs=None):
    """Rewrite C (F_e - F_c) <= d as A F_c <= b over the decision variable F_c."""
    a = -cone_matrix
    b = a @ np.asarray(f_e, dtype=float)
    if cone_rhs is not None:
        b = b + np.asarray(cone_rhs, dtype=float)
    return a, b


def qp_hessian(wrench_jac, reg_scale: float = 1e-8):
    """H = W W^T with trace-scaled ridge; W W^T is singular whenever rank < 6K."""
    w = np.asarray(wrench_jac, dtype=float)
    h = w @ w.T
    n = h.shape[0]
    eps = reg_scale * np.trace(h) / n
    if eps <= 0.0:
        eps = reg_scale
    return h + eps * np.eye(n), eps


def normal_push_point(contacts, f_e, scale: float | None = None,
                      preload: float = 0.0) -> np.ndarray:
    """A strictly feasible commanded wrench: make every contact a pure normal push.

    The cone rows are homogeneous in lambda (the preload bound aside), so
    lambda_i = t * z_i satisfies them strictly for any t above the preload;
    F_c = F_e - lambda is then always feasible.
    """
    f_e = np.asarray(f_e, dtype=float)
    t = scale if scale is not None else (
        1.0 + preload + float(np.max(np.abs(f_e), initial=0.0)))
    parts = []
    for contact in contacts:
        block = np.zeros(contact.dim)
        if contact.local_components:
            block[contact.components.index(_NORMAL)] = t
        else:
            normal_world = contact.rotation[:, 2]
            for col, comp in enumerate(contact.components):
                if comp < 3:
                    block[col] = t * normal_world[comp]
        parts.append(block)
    return f_e - np.concatenate(parts)


@dataclass
class QPResult:
    x: np.ndarray
    active: tuple
    iterations: int
    kkt_residual: float
    objective: float


class ActiveSetQP:
    """Dense primal active-set solver for strictly convex QPs.

    minimize 1/2 x^T H x + g^T x  subject to  A x <= b.

    Problems here are tiny (<= 12 variables, a few dozen rows), so each
    working-set change solves a dense KKT system directly. The instance keeps
    the previous solution and active set to warm-start the next tick.
    """

    def __init__(self, max_iter: int = 200, tol: float = 1e-9):
        self.max_iter = max_iter
        self.tol = tol
        self.last_x: np.ndarray | None = None
        self.last_active: tuple = ()

    def reset(self):
        self.last_x = None
        self.last_active = ()

    def _eqp(self, h, g, a, b, working):
        """Solve the equality-constrained subproblem for x and multipliers."""
        n = h.shape[0]
        idx = sorted(working)
        aw = a[idx]
        k = len(idx)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = h
        kkt[:n, n:] = aw.T
        kkt[n:, :n] = aw
        rhs = np.concatenate([-g, b[idx]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            # degenerate working set: tiny dual regularization keeps it solvable
            kkt[n:, n:] -= 1e-12 * np.eye(k)
            sol = np.linalg.solve(kkt, rhs)
        return sol[:n], dict(zip(idx, sol[n:]))

    def _initial_point(self, a, b, candidates):
        for x in candidates:
            if x is None:
                continue
            x = np.asarray(x, dtype=float)
            if a.shape[0] == 0 or np.all(a @ x <= b + self.tol):
                return x
        return None

    def solve(self, h, g, a, b, start_candidates=()) -> QPResult:
        h = np.asarray(h, dtype=float)
        g = np.asarray(g, dtype=float)
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float)
        n = h.shape[0]
        if a.size == 0:
            a = np.zeros((0, n))
            b = np.zeros(0)

        candidates = list(start_candidates)
        if self.last_x is not None and self.last_x.shape == (n,):
            candidates.insert(0, self.last_x)
        x = self._initial_point(a, b, candidates)
        if x is None:
            raise QPInfeasibleError("no feasible starting point among candidates")

        residual = a @ x - b if a.shape[0] else np.zeros(0)
        working = {
            int(i) for i in self.last_active
            if i < a.shape[0] and residual[i] > -self.tol
        }
        working |= {int(i) for i in np.flatnonzero(residual > -self.tol * 0.01)}
        working = self._independent_subset(a, working, n)

        iterations = 0
        while True:
            if iterations >= self.max_iter:
                raise QPMaxIterationsError(f"no convergence in {self.max_iter} iterations")
            iterations += 1
            x_eq, mult = self._eqp(h, g, a, b, working)
            p = x_eq - x
            if np.max(np.abs(p), initial=0.0) < self.tol:
                negative = [(nu, i) for i, nu in mult.items() if nu < -self.tol]
                if not negative:
                    x = x_eq
                    break
                working.discard(min(negative)[1])
                continue
            # longest feasible step toward the subproblem optimum
            alpha = 1.0
            blocking = None
            mask = [i for i in range(a.shape[0]) if i not in working]
            for i in mask:
                ap = a[i] @ p
                if ap > self.tol:
                    step = (b[i] - a[i] @ x) / ap
                    if step < alpha:
                        alpha = max(step, 0.0)
                        blocking = i
            x = x + alpha * p
            if blocking is not None:
                working.add(blocking)
                working = self._independent_subset(a, working, n)

        self.last_x = x.copy()
        self.last_active = tuple(sorted(working))
        kkt = self._kkt_residual(h, g, a, b, x, mult)
        objective = 0.5 * x @ h @ x + g @ x
        return QPResult(x=x, active=self.last_active, iterations=iterations,
                        kkt_residual=kkt, objective=objective)

    @staticmethod
    def _independent_subset(a, working, n):
        """Keep a linearly independent subset of working rows (at most n)."""
        idx = sorted(working)
        if not idx:
            return set()
        rows = a[idx]
        keep = []
        basis = np.zeros((0, a.shape[1]))
        for pos, row in zip(idx, rows):
            if len(keep) >= n:
                break
            trial = np.vstack([basis, row])
            if np.linalg.matrix_rank(trial, tol=1e-10) > basis.shape[0]:
                basis = trial
                keep.append(pos)
        return set(keep)

    @staticmethod
    def _kkt_residual(h, g, a, b, x, mult) -> float:
        """Max violation of stationarity, feasibility, sign and complementarity."""
        grad = h @ x + g
        for i, nu in mult.items():
            grad = grad + nu * a[i]
        res = float(np.max(np.abs(grad), initial=0.0))
        if a.shape[0]:
            res = max(res, float(np.max(a @ x - b, initial=0.0)))
        for i, nu in mult.items():
            res = max(res, max(-nu, 0.0))
            res = max(res, abs(nu * (a[i] @ x - b[i])))
        return res


def aggregate_external_wrench(m, h, p, p_dot, mc_inv, qdot, tau_motion, jx, fx,
                              wrench_jac_t_pinv) -> np.ndarray:
    """Sum of all external wrenches felt in the constrained space.

    Derived so that lambda = F_e - F_c holds identically against the
    constrained dynamics: the disturbance enters the motion equation through
    P Jx^T F_x and is transported into the constrained space through
    (I - P) Jx^T F_x.
    """
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    eye = np.eye(p.shape[0])
    jxt_fx = np.asarray(jx).T @ np.asarray(fx, dtype=float)
    qddot_src = mc_inv @ (p @ (tau_motion - h + jxt_fx) + p_dot @ qdot)
    joint_wrench = (eye - p) @ (m @ qddot_src + h - jxt_fx)
    return np.asarray(wrench_jac_t_pinv) @ joint_wrench


def constraint_torque(f_c, wrench_jac) -> np.ndarray:
    """tau_constraint = W^T F_c; lies in range(I - P) by construction."""
    return np.asarray(wrench_jac).T @ np.asarray(f_c, dtype=float)


@dataclass
class WrenchDecomposition:
    """lambda = F_e - F_c bookkeeping for one tick."""

    f_e: np.ndarray
    f_c: np.ndarray

    @property
    def contact_wrench(self) -> np.ndarray:
        return self.f_e - self.f_c


def estimate_to_wrench(estimate: ExternalWrenchEstimate) -> np.ndarray:
    return estimate.wrench
