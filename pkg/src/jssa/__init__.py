"""Jerk-level safe control for serial arms, with a benchmark HRI simulator.

A nominal jerk-bounded waypoint controller feeds a safeguard that monitors
the distance between the arm and moving agents and minimally modifies the
jerk command (one QP per step) so the separation never drops below the
margin while every emitted command respects the per-joint jerk box.
"""

from .kinematics import (
    JerkBounds,
    JointState,
    KinematicChain,
    PointJacobianBundle,
    REFERENCE_JERK_LIMITS_DEG,
    cartesian_jerk_of_point,
    default_arm,
    forward_kinematics,
    point_jacobian_bundle,
    step_joint_state,
)
from .geometry import (
    Capsule,
    CriticalPair,
    DegenerateDistance,
    PointState,
    capsule_distance,
    critical_pair,
    distance_derivatives,
)
from .agents import DynamicAgent, ScriptedTrajectory, StaticAgent, advance_driver, predict_agent
from .safety_index import (
    LinearizedConstraint,
    MinimaxEnvelope,
    SafetyIndexParams,
    build_constraint,
    export_phase_surface,
    phi,
    validate_roots,
    verify_minimax,
)
from .safeguard import CostMatrix, SafeControlOutcome, jssa_step, project_safe, ssa_step
from .jpc import CommandBuffer, Task, TaskInfeasible, generate, host_replan, internal_replan, next_command

__all__ = [name for name in dir() if not name.startswith("_")]
