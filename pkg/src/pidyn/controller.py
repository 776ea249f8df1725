"""Per-tick control assembly.

One compute() call runs the full pipeline for a tick: constraint projection,
impedance force in the motion space, external-wrench estimate from the task
displacement, aggregation of external effects in the constrained space, and
the minimum-torque commanded-wrench QP. The QP solver instance carries warm
starts between ticks, everything else is stateless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintTick
from .grasp import SWAP_HALVES
from .impedance import (ImpedanceGains, TaskSpace, control_force,
                        estimate_external_wrench, make_task_state, motion_torque,
                        posture_torque)
from .projection import ProjectionState, projection_state
from .trajectories import Desired
from .wrench_qp import (ActiveSetQP, QPError, aggregate_external_wrench,
                        cone_constraint_matrix, constraint_torque, normal_push_point,
                        qp_hessian, qp_inequalities)


@dataclass
class QPDiagnostics:
    iterations: int = 0
    active_size: int = 0
    objective: float = 0.0
    kkt_residual: float = 0.0
    infeasible: bool = False


@dataclass
class ControlOutput:
    tau: np.ndarray
    tau_motion: np.ndarray
    tau_constraint: np.ndarray
    force: np.ndarray
    fx_estimate: np.ndarray
    f_e: np.ndarray
    f_c: np.ndarray
    external_share: np.ndarray
    err_pos: np.ndarray
    err_vel: np.ndarray
    projection: ProjectionState
    qp: QPDiagnostics


class ProjectedImpedanceController:
    def __init__(self, task_space: TaskSpace, gains: ImpedanceGains, trajectory,
                 cone_edges: int = 8, qp_regularization: float = 1e-8,
                 qp_margin_scale: float = 0.9, qp_max_iterations: int = 200,
                 qp_preload: float = 0.0, quasi_static_estimate: bool = True,
                 posture_damping: float = 4.0, dt: float = 1e-3):
        self.task_space = task_space
        self.gains = gains
        self.trajectory = trajectory
        self.cone_edges = cone_edges
        self.qp_regularization = qp_regularization
        self.qp_margin_scale = qp_margin_scale
        self.qp_preload = qp_preload
        self.quasi_static_estimate = quasi_static_estimate
        self.posture_damping = posture_damping
        self.dt = dt
        self.solver = ActiveSetQP(max_iter=qp_max_iterations)
        self._last_fc: np.ndarray | None = None
        self._last_twist: np.ndarray | None = None

    def compute(self, t: float, qdot: np.ndarray, tick: ConstraintTick,
                mass: np.ndarray, bias: np.ndarray, wrench_t_pinv: np.ndarray
                ) -> ControlOutput:
        jx = self.task_space.reduce_rows(tick.task_jac)
        jx_dot = self.task_space.reduce_rows(tick.task_jac_dot)
        proj = projection_state(tick.jacobian.jc, tick.jacobian.jc_dot, mass,
                                jx=jx, jx_dot=jx_dot, h=bias, qdot=qdot)

        desired: Desired = self.trajectory.at(t)
        task = make_task_state(self.task_space, tick.task_pose, tick.task_twist,
                               desired.pose, desired.twist, desired.acceleration)

        force = control_force(task, self.gains, proj.Lambda_c, proj.h_c)
        tau_motion = motion_torque(force, jx, proj.P) + posture_torque(
            proj.P, jx, proj.Lambda_c, proj.Mc_inv, bias, qdot, self.posture_damping)
        if self.quasi_static_estimate:
            estimate = estimate_external_wrench(task, self.gains, proj.Lambda_c)
        else:
            # task acceleration from twist differencing (one tick behind)
            twist = task.twist
            accel = (np.zeros_like(twist) if self._last_twist is None
                     else (twist - self._last_twist) / self.dt)
            self._last_twist = twist.copy()
            estimate = estimate_external_wrench(task, self.gains, proj.Lambda_c,
                                                acceleration=accel, quasi_static=False)

        w = tick.jacobian.wrench_jac
        f_e = aggregate_external_wrench(mass, bias, proj.P, proj.P_dot, proj.Mc_inv,
                                        qdot, tau_motion, jx, estimate.wrench,
                                        wrench_t_pinv)

        # The friction constraints bind the physical contact wrench: internal
        # components (F_e - F_c) plus the load share the hands carry for the
        # object, reconstructed from the external-wrench estimate.
        if tick.grasp_pinv is not None and estimate.wrench.shape == (6,):
            external_share = tick.grasp_pinv @ (SWAP_HALVES @ estimate.wrench)
        else:
            external_share = np.zeros(w.shape[0])
        shifted_fe = f_e + external_share

        cone, cone_rhs = cone_constraint_matrix(tick.contacts, self.cone_edges,
                                                self.qp_margin_scale,
                                                preload=self.qp_preload)
        a_ineq, b_ineq = qp_inequalities(cone, shifted_fe, cone_rhs)
        hessian, _ = qp_hessian(w, self.qp_regularization)
        diag = QPDiagnostics()
        try:
            result = self.solver.solve(
                hessian, np.zeros(w.shape[0]), a_ineq, b_ineq,
                start_candidates=[np.zeros(w.shape[0]),
                                  normal_push_point(tick.contacts, shifted_fe,
                                                    preload=self.qp_preload)],
            )
            f_c = result.x
            diag.iterations = result.iterations
            diag.active_size = len(result.active)
            diag.objective = result.objective
            diag.kkt_residual = result.kkt_residual
            self._last_fc = f_c.copy()
        except QPError:
            # hold the previous command and flag the tick rather than dropping out
            diag.infeasible = True
            f_c = self._last_fc if self._last_fc is not None else np.zeros(w.shape[0])

        tau_constraint = constraint_torque(f_c, w)
        return ControlOutput(
            tau=tau_motion + tau_constraint,
            tau_motion=tau_motion,
            tau_constraint=tau_constraint,
            force=force,
            fx_estimate=estimate.wrench,
            f_e=f_e,
            f_c=f_c,
            external_share=external_share,
            err_pos=task.err_pos,
            err_vel=task.err_vel,
            projection=proj,
            qp=diag,
        )
