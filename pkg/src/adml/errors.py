"""Package exceptions."""


class EstimationError(RuntimeError):
    """An estimator or nuisance fit could not be completed."""


class DegenerateDesignError(EstimationError):
    """The sample admits no usable fit (constant treatment, empty design, ...)."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
