"""Sign-Perturbed Sums (SPS) confidence regions for linear regression.

Exact, distribution-free confidence regions for the parameter of
``y_t = phi_t^T theta + w_t`` under symmetric noise, with closed-form
non-asymptotic bounds on their diameter.
"""

from .bounds import (
    BoundInputs,
    bound_curve,
    f_delta,
    g_delta,
    lemma8_bound,
    min_valid_n,
    shrinkage_fit,
    theorem2_bound,
)
from .core import (
    RankResult,
    SpsConfig,
    compute_sums,
    coverage_probability,
    least_squares_estimate,
    rank_with_tiebreak,
    sps_indicator,
    sps_initialize,
    sps_rank,
)
from .data import (
    AssumptionConstants,
    Gaussian,
    GenerationSpec,
    RegressionDataset,
    SignSymmetric,
    Uniform,
    check_completely_exciting,
    coherence,
    estimate_constants,
    generate_dataset,
    gram_matrices,
)
from .experiments import (
    ExperimentConfig,
    run_concentration_check,
    run_coverage,
    run_figure1,
    run_property_suite,
)
from .geometry import (
    DiameterReport,
    ProjectionCertificate,
    QuadraticRegion,
    affine_sum_maps,
    build_certificate,
    empirical_diameter,
    exact_diameter_m2,
    is_bounded,
    pairwise_region,
    sample_region_points,
    theta_tilde_region,
)
from .linalg import principal_sqrt_inverse, pseudoinverse, thin_qr

__version__ = "0.1.0"
