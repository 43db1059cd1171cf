"""kerlin: kernel methods and their equivalent linear models at scale.

In the proportional high-dimensional regime (n and p growing together,
features covering the space uniformly), the kernel matrices of a broad
family of kernels, the ReLU tangent kernel included, concentrate around
an explicit linear surrogate.  This package computes that surrogate and
its coefficients, maps kernel ridge regression onto an equivalent
regularized affine model (statically and along gradient-descent
trajectories), evaluates Gaussian-process posteriors and Bayes risks,
and ships a seeded experiment CLI that measures all of it.
"""

__version__ = "0.1.0"

from .kernels import (
    KernelDescriptor,
    cross_gram,
    empirical_ntk,
    gram,
    kappa0,
    kappa1,
    kernel_diag,
    kernel_from_config,
    kernel_to_config,
    make_linear_kernel,
    make_ntk_kernel,
    make_polynomial_kernel,
    make_rbf_kernel,
    ntk_exact,
)
from .linearize import (
    CovarianceSpec,
    SurrogateCoefficients,
    coefficients,
    coefficients_from_data,
    gap_sweep,
    operator_norm_gap,
    surrogate_matrix,
)
from .estimators import (
    EquivalentLinearRidge,
    GPRegressor,
    GpPosterior,
    KernelRidge,
    KrrFit,
    LinearFit,
    LinearRidge,
    Trajectory,
    default_learning_rate,
    equivalent_regularizers,
    fit_krr,
    fit_linear_ridge,
    gd_kernel_trajectory,
    gd_linear_trajectory,
    gp_posterior,
    linear_risk,
    normalized_test_error,
    predict_krr,
    predict_linear,
)
from .datagen import (
    Dataset,
    FeatureModel,
    ReluTeacher,
    child_rng,
    child_seed,
    gp_teacher_outputs,
    load_dataset,
    mixture_covariance,
    relu_teacher,
    sample_features,
    save_dataset,
)

__all__ = [
    "__version__",
    # kernels
    "KernelDescriptor", "make_linear_kernel", "make_polynomial_kernel",
    "make_rbf_kernel", "make_ntk_kernel", "kernel_from_config",
    "kernel_to_config", "kappa0", "kappa1", "gram", "cross_gram",
    "kernel_diag", "ntk_exact", "empirical_ntk",
    # linearization
    "CovarianceSpec", "SurrogateCoefficients", "coefficients",
    "coefficients_from_data", "surrogate_matrix", "operator_norm_gap",
    "gap_sweep",
    # estimators
    "KrrFit", "LinearFit", "Trajectory", "GpPosterior", "fit_krr",
    "predict_krr", "equivalent_regularizers", "fit_linear_ridge",
    "predict_linear", "default_learning_rate", "gd_kernel_trajectory",
    "gd_linear_trajectory", "gp_posterior", "linear_risk",
    "normalized_test_error", "KernelRidge", "LinearRidge",
    "EquivalentLinearRidge", "GPRegressor",
    # data generation
    "FeatureModel", "sample_features", "ReluTeacher", "relu_teacher",
    "gp_teacher_outputs", "mixture_covariance", "child_seed", "child_rng",
    "Dataset", "save_dataset", "load_dataset",
]
