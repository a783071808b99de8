"""Gaussian-to-Gaussian distribution regression under the 2-Wasserstein metric.

Gaussians map into a linear space of (vector, symmetric matrix) pairs via
the closed-form optimal transport at a reference measure; linear regression
(full or rank-K) runs there; predictions map back, with boundary projection
when a fit leaves the admissible range. A Monte Carlo harness and a CSV
train/predict/evaluate workflow sit on top.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceWarning,
    DegenerateInput,
    DegenerateReference,
    DimensionMismatch,
    EmptyBlock,
    EmptyInput,
    GwregError,
    InputError,
    LengthMismatch,
    NoConvergence,
    NotPositiveDefinite,
    NotPositiveSemidefinite,
    NumericalError,
    OutOfRange,
    SingularHessian,
)
from .geometry import (
    GaussianMeasure,
    ReferenceMeasure,
    TangentVector,
    exp_map,
    frechet_mean,
    in_range,
    log_map,
    optimal_transport_apply,
    tangent_inner,
    tangent_norm,
    transport_coefficient,
    wasserstein_distance,
    wasserstein_distances,
)
from .matfun import invsqrt_pd, min_eigenvalue, project_psd, sqrt_psd, symmetrize
from .regression import (
    FitDiagnostics,
    FitOptions,
    FittedModel,
    Prediction,
    fit_basic,
    fit_distributions,
    fit_low_rank,
    fit_scalar,
    model_from_dict,
    model_from_json,
    model_to_dict,
    model_to_json,
    predict,
    predict_batch,
    predict_scalar,
    sandwich_covariance,
    tangent_gram,
)
from .sampling import SampleBlock, block_moments, empirical_moments, fit_from_samples
from .simulation import (
    RunRecord,
    ScenarioConfig,
    awd,
    fit_alternative,
    generate_mixture,
    generator_tensor,
    run_scenario,
    sample_block,
    summarize_records,
)
from .tensors import (
    CoefficientTensor,
    IdentifiedTensor,
    LowRankFactors,
    contract,
    fold_to_identified,
    free_coord_count,
    half_vec,
    identified_to_vec,
    matrix_from_half_vec,
    mirror_matrix,
    mirror_tensor,
    tangent_from_half_vec,
    tensor_sym_part,
    vec_to_identified,
)

__all__ = [name for name in dir() if not name.startswith("_")]
