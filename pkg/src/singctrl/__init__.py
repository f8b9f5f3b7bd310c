"""Direct transcription toolkit for singular optimal control with total-variation regularization."""

from .errors import (
    ConfigError,
    ContractError,
    CostEvaluationError,
    InfeasibleError,
    ParameterDomainError,
    RolloutDivergedError,
    SingCtrlError,
)
from .ocp import (
    ControlProblem,
    Mesh,
    Trajectory,
    backward_adjoint,
    discrete_cost,
    gradient_via_lagrangian,
    reduced_cost,
    reduced_gradient,
    rollout_state,
    solve_trajectory,
)

__all__ = [
    "ConfigError", "ContractError", "CostEvaluationError", "InfeasibleError",
    "ParameterDomainError", "RolloutDivergedError", "SingCtrlError",
    "ControlProblem", "Mesh", "Trajectory", "backward_adjoint", "discrete_cost",
    "gradient_via_lagrangian", "reduced_cost", "reduced_gradient", "rollout_state",
    "solve_trajectory",
]

__version__ = "0.1.0"
