from .algorithms import (
    METHODS,
    DivergenceError,
    StalenessError,
    StopRule,
    record_history,
    run,
    solve_reference,
)
from .applications import (
    AugL1Spec,
    BestApproxSpec,
    BuildError,
    NumSpec,
    build_augmented_l1,
    build_best_approximation,
    build_num,
)
from .config import ConfigError, load_config, parse_config, serialize_config
from .diagnostics import (
    check_descent,
    check_tail_recurrence,
    estimate_sigma,
    fit_linear_rate,
    primal_error_bound,
)
from .functions import (
    ElasticNetScalar,
    IndicatorSet,
    NegUtilityBoxed,
    QuadraticPlusIndicator,
    UnsupportedComponentError,
    conjugate_grad,
    pair_values,
    prox,
    prox_conjugate,
)
from .problem import (
    CompositeProblem,
    ReferenceSolution,
    compute_constants,
    dual_value,
    duality_gap,
    lipschitz_constants,
    max_stepsize_and_rate,
    primal_from_dual,
    solve_z0,
)
from .schedules import CyclicDelay, RandomBoundedDelay, ZeroDelay
from .spaces import BlockLayout, BlockOperator, BlockVector, DimensionError
from .trace import Trace, TraceRow

__all__ = [
    "AugL1Spec",
    "BestApproxSpec",
    "BlockLayout",
    "BlockOperator",
    "BlockVector",
    "BuildError",
    "build_augmented_l1",
    "build_best_approximation",
    "build_num",
    "check_descent",
    "check_tail_recurrence",
    "CompositeProblem",
    "compute_constants",
    "ConfigError",
    "conjugate_grad",
    "CyclicDelay",
    "DimensionError",
    "DivergenceError",
    "dual_value",
    "duality_gap",
    "ElasticNetScalar",
    "estimate_sigma",
    "fit_linear_rate",
    "IndicatorSet",
    "lipschitz_constants",
    "load_config",
    "max_stepsize_and_rate",
    "METHODS",
    "NegUtilityBoxed",
    "NumSpec",
    "pair_values",
    "parse_config",
    "primal_error_bound",
    "primal_from_dual",
    "prox",
    "prox_conjugate",
    "QuadraticPlusIndicator",
    "RandomBoundedDelay",
    "record_history",
    "ReferenceSolution",
    "run",
    "serialize_config",
    "solve_reference",
    "solve_z0",
    "StalenessError",
    "StopRule",
    "Trace",
    "TraceRow",
    "UnsupportedComponentError",
    "ZeroDelay",
]
