"""Equilibrate parametrization of proximal operators and ADMM.

The main entry points are re-exported here; see the submodules for the
full API.
"""

from .admm import (
    AdmmConfig,
    AdmmState,
    NonConvergenceError,
    admm_classical,
    admm_equilibrate,
    admm_fixed_point_map,
    build_unified_dual,
    self_duality_check,
)
from .core import (
    DiagonalMetric,
    DimensionMismatchError,
    Parametrization,
    ProblemSpec,
    SolutionPair,
    ValidationReport,
    metric_from_vector,
    validate_problem,
)
from .fixedpoint import Trace, check_parallel_scaling, iterate, rate_bound, verify_rate
from .metric_select import (
    MetricChoice,
    estimate_reference,
    one_shot_solve,
    optimal_metric,
    optimality_residual,
    selection_objective,
)
from .prox import (
    ProxSpec,
    UnsupportedFunctionError,
    metric_prox_l1,
    moreau_decompose,
    prox_classical,
    prox_equilibrate,
    soft_threshold,
    tilt_prox,
    translate_parametrization,
)

__version__ = "0.1.0"
