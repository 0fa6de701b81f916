"""Homotopy continuation for nonconvex discrete-time optimal control.

The KKT system of ``min J(u) s.t. G(lam, u) <= 0`` is embedded in a homotopy
whose zero curve runs from a trivially feasible relaxed problem at
``lam = 0`` to a KKT point of the original problem at ``lam = 1``.
"""
from .diagnostics import AssumptionReport, CheckResult, check_A5_A6_sampled, curve_health, validate_params, verify_kkt
from .homotopy import (
    CurvePoint,
    HomotopyParams,
    InvalidParams,
    K_partials,
    K_values,
    rho,
    rho_jacobian,
    solve_initial_multipliers,
)
from .pathplan import (
    ConfigError,
    InfeasibleGuess,
    Obstacle,
    PathPlanConfig,
    build_problem,
    find_initial_guess,
    trajectory,
)
from .problem import (
    ConstraintFamily,
    DimensionError,
    Dynamics,
    NonFiniteError,
    OcpProblem,
    RunningCost,
    TerminalCost,
    cost_gradient,
    rollout,
    rollout_with_sensitivities,
    stack,
    total_cost,
    unstack,
)
from .tracker import SolveResult, Status, TraceRecord, TrackerConfig, follow_curve, tangent, track, write_trace_csv
from .transcription import (
    NlpView,
    complementarity,
    evaluate_G,
    gradient_G,
    kkt_residual_alpha,
    lagrangian_hessian,
    stationarity,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CheckResult",
    "ConfigError",
    "ConstraintFamily",
    "CurvePoint",
    "DimensionError",
    "Dynamics",
    "HomotopyParams",
    "InfeasibleGuess",
    "InvalidParams",
    "K_partials",
    "K_values",
    "NlpView",
    "NonFiniteError",
    "Obstacle",
    "OcpProblem",
    "PathPlanConfig",
    "RunningCost",
    "SolveResult",
    "Status",
    "TerminalCost",
    "TraceRecord",
    "TrackerConfig",
    "build_problem",
    "check_A5_A6_sampled",
    "complementarity",
    "cost_gradient",
    "curve_health",
    "evaluate_G",
    "find_initial_guess",
    "follow_curve",
    "gradient_G",
    "kkt_residual_alpha",
    "lagrangian_hessian",
    "rho",
    "rho_jacobian",
    "rollout",
    "rollout_with_sensitivities",
    "solve_initial_multipliers",
    "stack",
    "stationarity",
    "tangent",
    "total_cost",
    "track",
    "trajectory",
    "unstack",
    "validate_params",
    "verify_kkt",
    "write_trace_csv",
]
