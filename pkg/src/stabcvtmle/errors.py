"""Exception types raised across the package."""


class EstimationError(ValueError):
    """Base class for failures while fitting or evaluating an estimator."""


class SingularFitError(EstimationError):
    """The outcome-regression design matrix is rank deficient."""

    def __init__(self, message: str, endpoint: int | None = None):
        super().__init__(message)
        self.endpoint = endpoint


class PositivityError(ValueError):
    """A treatment probability lies outside the open unit interval."""


class DegenerateVarianceError(EstimationError):
    """A composite variance is zero or negative where a positive one is required."""


class CovarianceError(EstimationError):
    """A covariance matrix cannot be repaired into a usable PSD factor."""


class DegenerateInferenceError(EstimationError):
    """Zero estimated variance alongside a nonzero point estimate."""


class InfeasibleTruncationError(ValueError):
    """A truncation region carries too little probability mass to sample from."""


class ConfigurationError(ValueError):
    """A simulation configuration is internally inconsistent."""


class FoldError(EstimationError):
    """An estimation failure inside one cross-validation fold."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause
