"""Data-driven synthesis of observer correction-term policies.

Policy iteration over measured input/output histories, with a
convex-trained quadratic network as value-function approximator and the
discounted Riccati solution as the closed-form reference.
"""

from ._kernels import backend_name
from .errors import (
    ConditioningError,
    IdentifiabilityError,
    ObservabilityError,
    ObserverPiError,
    PolicyEvaluationError,
    PolicyRolloutError,
    RiccatiConvergenceError,
    SimulationDivergedError,
    TrainingConvergenceError,
)
from .model import (
    CostConfig,
    ReconstructionMatrices,
    RiccatiSolution,
    SystemModel,
    build_reconstruction,
    closed_form_value_matrix,
    load_cost,
    load_model,
    observability_matrix,
    reconstruct_error_state,
    riccati_map,
    save_cost,
    save_model,
    solve_discounted_riccati,
    spectral_radius,
)
from .pi import (
    EvaluationResult,
    OuterRecord,
    PiConfig,
    PiRun,
    assemble_labels,
    bellman_residual,
    evaluate_policy,
    improve_policy,
    load_pi_config,
    policy_consistent_windows,
    run_policy_iteration,
    sample_stabilizing_policy,
    save_pi_config,
)
from .qnn import (
    ActivationCoeffs,
    QnnModel,
    QnnTrainingProblem,
    evaluate_neurons,
    extract_mapping,
    quadratic_features,
    recover_neurons,
    train_quadratic,
)
from .sim import (
    CorrectionPolicy,
    ExcitationConfig,
    LuenbergerPolicy,
    MeasuredDataPolicy,
    PendulumParams,
    Trajectory,
    Window,
    ZeroPolicy,
    default_horizon,
    extract_windows,
    load_excitation,
    load_policy,
    save_excitation,
    save_policy,
    simulate_linear,
    simulate_pendulum,
    truncated_cost_to_go,
)
from .value import ValueMatrix, from_blocks, independent_element_count

__version__ = "0.1.0"

__all__ = [
    "ActivationCoeffs",
    "ConditioningError",
    "CorrectionPolicy",
    "CostConfig",
    "EvaluationResult",
    "ExcitationConfig",
    "IdentifiabilityError",
    "LuenbergerPolicy",
    "MeasuredDataPolicy",
    "ObservabilityError",
    "ObserverPiError",
    "OuterRecord",
    "PendulumParams",
    "PiConfig",
    "PiRun",
    "PolicyEvaluationError",
    "PolicyRolloutError",
    "QnnModel",
    "QnnTrainingProblem",
    "ReconstructionMatrices",
    "RiccatiConvergenceError",
    "RiccatiSolution",
    "SimulationDivergedError",
    "SystemModel",
    "Trajectory",
    "TrainingConvergenceError",
    "ValueMatrix",
    "Window",
    "ZeroPolicy",
    "assemble_labels",
    "backend_name",
    "bellman_residual",
    "build_reconstruction",
    "closed_form_value_matrix",
    "default_horizon",
    "evaluate_neurons",
    "evaluate_policy",
    "extract_mapping",
    "extract_windows",
    "from_blocks",
    "improve_policy",
    "independent_element_count",
    "load_cost",
    "load_excitation",
    "load_model",
    "load_pi_config",
    "load_policy",
    "observability_matrix",
    "policy_consistent_windows",
    "quadratic_features",
    "reconstruct_error_state",
    "recover_neurons",
    "riccati_map",
    "run_policy_iteration",
    "sample_stabilizing_policy",
    "save_cost",
    "save_excitation",
    "save_model",
    "save_pi_config",
    "save_policy",
    "simulate_linear",
    "simulate_pendulum",
    "solve_discounted_riccati",
    "spectral_radius",
    "train_quadratic",
    "truncated_cost_to_go",
]
