"""Tikhonov regularization parameter selection by truncated-UPRE minimization."""

from .algorithm import TupreConfig, TupreResult, run_tupre
from .decay import DecayModel, fit_decay, noise_index_bound, rank_bound, singular_value_at
from .errors import (
    DegenerateInputError,
    DomainError,
    InputError,
    NumericError,
    TupreError,
)
from .estimators import (
    AlphaInterval,
    EstimatorInput,
    alpha_lower_bound,
    gcv_value,
    minimize_objective,
    upre_bounds,
    upre_grad,
    upre_hess,
    upre_value,
)
from .problems import (
    ProblemInstance,
    add_noise,
    estimate_noise_index,
    estimate_noise_variance,
    generate_blur_problem,
    generate_model_problem,
    rre,
    with_noise_level,
)
from .spectral import (
    FilteredSolution,
    SingularSystem,
    SpectralCoefficients,
    compute_svd,
    effective_rank,
    filter_factors,
    normalize_data,
    picard_data,
    solve_filtered,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaInterval",
    "DecayModel",
    "DegenerateInputError",
    "DomainError",
    "EstimatorInput",
    "FilteredSolution",
    "InputError",
    "NumericError",
    "ProblemInstance",
    "SingularSystem",
    "SpectralCoefficients",
    "TupreConfig",
    "TupreError",
    "TupreResult",
    "add_noise",
    "alpha_lower_bound",
    "compute_svd",
    "effective_rank",
    "estimate_noise_index",
    "estimate_noise_variance",
    "filter_factors",
    "fit_decay",
    "gcv_value",
    "generate_blur_problem",
    "generate_model_problem",
    "minimize_objective",
    "noise_index_bound",
    "normalize_data",
    "picard_data",
    "rank_bound",
    "rre",
    "run_tupre",
    "singular_value_at",
    "solve_filtered",
    "upre_bounds",
    "upre_grad",
    "upre_hess",
    "upre_value",
    "with_noise_level",
]
