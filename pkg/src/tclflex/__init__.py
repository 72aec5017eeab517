"""Fleet flexibility toolkit for thermostatically controlled loads.

Builds Markov bin models of air-conditioner fleets, characterizes the
demand reductions they can reach and hold (inner, outer, and exact LP
boundaries), aggregates those capabilities across fleets, and
cross-validates the bin model against a per-unit micro-simulation.
"""

from .aggregation import (
    MODES,
    CombinedSet,
    combine,
    combine_many,
    query_p_at_t,
    query_t_at_p,
    save_combined,
)
from .errors import (
    ConstraintViolationError,
    FrontierMonotonicityError,
    InvalidConfigurationError,
    InvalidInputError,
    NumericalFailureError,
    TclFlexError,
    ValidationDegradedWarning,
)
from .etp import (
    DEFAULT_PARAMS,
    Fleet,
    FleetSpec,
    FleetStepper,
    FleetTrace,
    TclParams,
    sample_fleet,
    simulate_fleet,
    step_tcl,
)
from .markov import (
    BinGrid,
    OutputVector,
    PopulationState,
    StationaryResult,
    TransitionMatrix,
    aggregate_power,
    build_grid,
    estimate_transition_matrix,
    load_matrix,
    output_vector,
    save_matrix,
    stationary_distribution,
    step_population,
    x_out_vector,
)
from .reachhold import (
    EXACT,
    INNER,
    METHODS,
    OUTER,
    CharacterizedFleet,
    ConditionReport,
    ControlPlan,
    HoldResponse,
    InnerPoint,
    ReachHoldPoint,
    ReachHoldSet,
    ResponseKernels,
    alpha_lower_bound,
    build_fictitious_system,
    characterize,
    check_outer_condition,
    default_p_grid,
    delta_p,
    delta_p_by_stepping,
    frontier_from_samples,
    inner_boundary,
    inner_p_at,
    inner_point,
    load_set,
    outer_boundary,
    precool_compare,
    response_kernels,
    save_set,
    solve_exact,
    solve_outer,
    sweep_setpoint,
)
from .validation import (
    DiscretizedPlan,
    MicroRun,
    ValidationReport,
    apply_plan_micro,
    burn_in,
    compare_traces,
    discretize_plan,
    save_validation_report,
)

__version__ = "0.1.0"

__all__ = [
    "MODES",
    "CombinedSet",
    "combine",
    "combine_many",
    "query_p_at_t",
    "query_t_at_p",
    "save_combined",
    "TclFlexError",
    "InvalidInputError",
    "InvalidConfigurationError",
    "ConstraintViolationError",
    "NumericalFailureError",
    "FrontierMonotonicityError",
    "ValidationDegradedWarning",
    "DEFAULT_PARAMS",
    "Fleet",
    "FleetSpec",
    "FleetStepper",
    "FleetTrace",
    "TclParams",
    "sample_fleet",
    "simulate_fleet",
    "step_tcl",
    "BinGrid",
    "OutputVector",
    "PopulationState",
    "StationaryResult",
    "TransitionMatrix",
    "aggregate_power",
    "build_grid",
    "estimate_transition_matrix",
    "load_matrix",
    "output_vector",
    "save_matrix",
    "stationary_distribution",
    "step_population",
    "x_out_vector",
    "EXACT",
    "INNER",
    "METHODS",
    "OUTER",
    "CharacterizedFleet",
    "ConditionReport",
    "ControlPlan",
    "HoldResponse",
    "InnerPoint",
    "ReachHoldPoint",
    "ReachHoldSet",
    "ResponseKernels",
    "alpha_lower_bound",
    "build_fictitious_system",
    "characterize",
    "check_outer_condition",
    "default_p_grid",
    "delta_p",
    "delta_p_by_stepping",
    "frontier_from_samples",
    "inner_boundary",
    "inner_p_at",
    "inner_point",
    "load_set",
    "outer_boundary",
    "precool_compare",
    "response_kernels",
    "save_set",
    "solve_exact",
    "solve_outer",
    "sweep_setpoint",
    "DiscretizedPlan",
    "MicroRun",
    "ValidationReport",
    "apply_plan_micro",
    "burn_in",
    "compare_traces",
    "discretize_plan",
    "save_validation_report",
    "__version__",
]
