"""Tools for checking subgeometric convergence in Wasserstein distance.

Modules:
  rate_kernel  rate functions, the H transform, rate bounds, Petrov recursion
  transport    bounded metrics, empirical measures, exact optimal transport
  chains       digit-shift chain and Euler-Maruyama for delay equations
  lyapunov     drift, d-smallness and contraction checks
  harness      convergence experiments and rate-constant fitting
"""
from .chains import MarkovModel, SegmentGrid, SegmentState, digit_chain, sample_marginal, simulate_sdde
from .errors import (
    BlowUpError,
    ConvergenceError,
    DegenerateFitError,
    DomainError,
    ParameterError,
    SizeGuardError,
    SubgeomError,
    UnsupportedKindError,
)
from .harness import ConvergenceCurve, ExperimentConfig, fit_rate_constants, run_convergence_experiment
from .lyapunov import (
    SemimetricL,
    check_cumulative_drift,
    check_drift_continuous,
    check_drift_discrete,
    contraction_beta,
    estimate_dsmall,
    estimate_onestep_l_contraction,
    semimetric_l_eval,
)
from .rate_kernel import (
    PsiFunction,
    RateBoundParams,
    RateFunction,
    h_inverse,
    h_transform,
    petrov_bound_check,
    rate_asymptotics,
    rate_bound,
)
from .transport import (
    BoundedMetric,
    EmpiricalMeasure,
    TransportPlan,
    tv_distance,
    wasserstein_1d,
    wasserstein_exact,
    wasserstein_to_uniform,
)

__version__ = "0.1.0"
