"""Numerical laboratory for reward-weighted feature recovery and
tilted-policy evaluation in Gaussian single-index reward models."""

from .links import (
    DEFAULT_ACTIVATIONS,
    PRESETS,
    LinkValidation,
    PolynomialLink,
    hermite_link,
    resolve_link,
    validate_link,
)
from .hermite import (
    ExponentReport,
    generative_exponent,
    hermite_coefficient,
    hermite_polynomial,
    information_exponent,
    student_signal,
    teacher_signal,
)
from .maxima import MaximaReport, Maximizer, analyze_maxima, sup_abs_on_ball
from .sampling import SampleBatch, default_theta_star, sample_batch, stream_rng
from .network import (
    NetworkState,
    feature_map,
    init_network,
    network_reward,
    sample_biases,
    synthetic_recovered_network,
)
from .recovery import (
    RecoveryTrajectory,
    StudyResult,
    population_drift,
    run_recovery,
    scaling_study,
    sgd_step,
)
from .ridge import (
    ProjectedTruncation,
    RidgeFit,
    WeightRule,
    build_truncation,
    fit_weighted_ridge,
    lambda_schedule,
    subspace_reward_fn,
)
from .tilted import (
    NoiseTiltMoments,
    TiltedMoments1D,
    ValueGapReport,
    learned_policy_expectation,
    noise_tilt_moments,
    target_truncated_expectation,
    tilted_1d_moments,
    value_gap_report,
)
from .coverage import (
    AdmissibleSet,
    CoverageEstimate,
    GammaParams,
    RateParams,
    SurrogateConstant,
    admissible_set,
    coverage_D,
    surrogate_constant,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ACTIVATIONS", "PRESETS", "LinkValidation", "PolynomialLink",
    "hermite_link", "resolve_link", "validate_link",
    "ExponentReport", "generative_exponent", "hermite_coefficient",
    "hermite_polynomial", "information_exponent", "student_signal", "teacher_signal",
    "MaximaReport", "Maximizer", "analyze_maxima", "sup_abs_on_ball",
    "SampleBatch", "default_theta_star", "sample_batch", "stream_rng",
    "NetworkState", "feature_map", "init_network", "network_reward",
    "sample_biases", "synthetic_recovered_network",
    "RecoveryTrajectory", "StudyResult", "population_drift", "run_recovery",
    "scaling_study", "sgd_step",
    "ProjectedTruncation", "RidgeFit", "WeightRule", "build_truncation",
    "fit_weighted_ridge", "lambda_schedule", "subspace_reward_fn",
    "NoiseTiltMoments", "TiltedMoments1D", "ValueGapReport",
    "learned_policy_expectation", "noise_tilt_moments",
    "target_truncated_expectation", "tilted_1d_moments", "value_gap_report",
    "AdmissibleSet", "CoverageEstimate", "GammaParams", "RateParams",
    "SurrogateConstant", "admissible_set", "coverage_D", "surrogate_constant",
    "__version__",
]
