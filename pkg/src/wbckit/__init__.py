"""Whole-body control toolkit for floating-base rigid-body systems.

Builds torque-level whole-body controllers in two flavors — a conventional
single-QP formulation over the full model and a two-stage lexicographic
formulation over a reduced model whose unconstrained chains are collapsed to
their 6-DOF centroidal coordinates — plus the dynamics, reduction, QP, and
simulation layers they stand on.
"""

from .controller import (
    CONVENTIONAL,
    REDUCED,
    ContactSpec,
    ControllerConfig,
    ControllerError,
    JointLimits,
    Scenario,
    TaskSpec,
    TorqueCommand,
    Trajectory,
    WholeBodyController,
    default_scenario,
    load_scenario,
    tick,
)
from .dynamics import DynamicsError, Workspace
from .lqp import LqpLevel, LqpSolution, QpProblem, QpResult, solve_lqp_sequential, solve_lqp_weighted, solve_qp
from .model import (
    HumanoidParams,
    ModelError,
    RobotModel,
    RobotState,
    generate_humanoid,
    model_to_json,
    parse_model,
    standing_state,
    sweep_params,
)
from .reduction import ChainPartition, ReducedModel, build_reduction, partition_chains
from .sim import SimConfig, SimError, TrajectoryLog, run_scenario, step, tracking_summary

__version__ = "0.1.0"

__all__ = [
    "CONVENTIONAL",
    "REDUCED",
    "ChainPartition",
    "ContactSpec",
    "ControllerConfig",
    "ControllerError",
    "DynamicsError",
    "HumanoidParams",
    "JointLimits",
    "LqpLevel",
    "LqpSolution",
    "ModelError",
    "QpProblem",
    "QpResult",
    "ReducedModel",
    "RobotModel",
    "RobotState",
    "Scenario",
    "SimConfig",
    "SimError",
    "TaskSpec",
    "TorqueCommand",
    "Trajectory",
    "TrajectoryLog",
    "WholeBodyController",
    "Workspace",
    "build_reduction",
    "default_scenario",
    "generate_humanoid",
    "load_scenario",
    "model_to_json",
    "parse_model",
    "partition_chains",
    "run_scenario",
    "solve_lqp_sequential",
    "solve_lqp_weighted",
    "solve_qp",
    "standing_state",
    "step",
    "sweep_params",
    "tick",
    "tracking_summary",
]
