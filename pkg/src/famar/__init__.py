"""Factor-augmented matrix regression.

Matrix-valued covariates ``X_i = R F_i C^T + U_i`` are split into a
low-dimensional factor panel and an idiosyncratic panel, and a scalar
response is regressed on both with a nuclear-norm (or lasso) penalty on
the idiosyncratic coefficient.
"""

from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    DegenerateSpectrumError,
    EstimationError,
    FamarError,
    ShapeError,
    SingularGramError,
)
from .mfm import MfmFit, ProjectionPair, fit_mfm, pretrain_projections
from .rotation import varimax
from .solver import (
    RegressionData,
    RegressionFit,
    SolverConfig,
    apgd_nuclear,
    cross_validate,
    fit_baseline_nuclear,
    fit_sparse,
    lambda_max_nuclear,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DegenerateScaleError", "DegenerateSpectrumError", "EstimationError",
    "FamarError", "ShapeError", "SingularGramError", "MfmFit", "ProjectionPair", "fit_mfm",
    "pretrain_projections", "varimax", "RegressionData", "RegressionFit", "SolverConfig",
    "apgd_nuclear", "cross_validate", "fit_baseline_nuclear", "fit_sparse", "lambda_max_nuclear",
    "predict",
]
