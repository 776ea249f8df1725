"""Projected inverse dynamics control for constrained manipulators.

Decomposes joint torques into a motion component (a constraint-consistent
Cartesian impedance law) and a constraint component (minimum-torque contact
wrenches from a friction-cone QP), and validates the combination in a
self-contained constrained rigid-body simulation.
"""

from .dynamics import (DynamicsTerms, JointState, bias_forces, dynamics_terms,
                       forward_kinematics, jacobian, jacobian_dot, mass_matrix)
from .grasp import ContactFrame, GraspMap, grasp_map, grasp_matrix, multiarm_constraint_jacobian
from .impedance import (ImpedanceGains, TaskSpace, TaskState, control_force,
                        estimate_external_wrench, full_impedance_force_with_inertia_shaping,
                        make_task_state, motion_torque)
from .model import Link, ManipulatorModel, load_robot_model
from .projection import (ProjectionState, RankDeficiencyError, TaskSingularityError,
                         constraint_inertia, projection_state, projector, projector_dot,
                         pseudoinverse, task_space_terms)
from .rotations import Pose, skew
from .sim import (DisturbanceProfile, IntegratorConfig, SimState,
                  constrained_acceleration, step, true_constraint_force)
from .wrench_qp import (ActiveSetQP, FrictionParams, aggregate_external_wrench,
                        constraint_torque, linearize_friction_cone)

__all__ = [
    "ActiveSetQP",
    "ContactFrame",
    "DisturbanceProfile",
    "DynamicsTerms",
    "FrictionParams",
    "GraspMap",
    "ImpedanceGains",
    "IntegratorConfig",
    "JointState",
    "Link",
    "ManipulatorModel",
    "Pose",
    "ProjectionState",
    "RankDeficiencyError",
    "SimState",
    "TaskSingularityError",
    "TaskSpace",
    "TaskState",
    "aggregate_external_wrench",
    "bias_forces",
    "constrained_acceleration",
    "constraint_inertia",
    "constraint_torque",
    "control_force",
    "dynamics_terms",
    "estimate_external_wrench",
    "forward_kinematics",
    "full_impedance_force_with_inertia_shaping",
    "grasp_map",
    "grasp_matrix",
    "jacobian",
    "jacobian_dot",
    "linearize_friction_cone",
    "load_robot_model",
    "make_task_state",
    "mass_matrix",
    "motion_torque",
    "multiarm_constraint_jacobian",
    "projection_state",
    "projector",
    "projector_dot",
    "pseudoinverse",
    "skew",
    "step",
    "task_space_terms",
    "true_constraint_force",
]

__version__ = "0.1.0"
