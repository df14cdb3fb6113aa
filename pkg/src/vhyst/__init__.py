"""Forward and inverse energy-based vector hysteresis operators with regularized Newton solvers."""

from .forward import ForwardResult, SolverError, SolveStats, evaluate_forward, forward_jacobian, newton_solve_cell
from .inverse import (
    InverseResult,
    NewtonDirectionMethod,
    dense_newton_direction,
    evaluate_inverse,
    inverse_jacobian,
    schur_newton_direction,
)
from .model import (
    MU0,
    DomainError,
    MagnetizationState,
    MaterialModel,
    PinningCell,
    SolverConfig,
    forward_objective,
    inverse_objective,
)
from .oracles import is_stuck, reference_unregularized, scalar_play_exact

__all__ = [
    "MU0",
    "DomainError",
    "ForwardResult",
    "InverseResult",
    "MagnetizationState",
    "MaterialModel",
    "NewtonDirectionMethod",
    "PinningCell",
    "SolveStats",
    "SolverConfig",
    "SolverError",
    "dense_newton_direction",
    "evaluate_forward",
    "evaluate_inverse",
    "forward_jacobian",
    "forward_objective",
    "inverse_jacobian",
    "inverse_objective",
    "is_stuck",
    "newton_solve_cell",
    "reference_unregularized",
    "scalar_play_exact",
    "schur_newton_direction",
]
