"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or mismatched dimensions."""


class DegenerateProblemError(ValueError):
    """The problem instance has no usable structure (e.g. an all-zero matrix)."""


class InsufficientDataError(ValueError):
    """Too few sweep points to fit a rate."""


class StreamReuseError(RuntimeError):
    """A random stream key was consumed twice while key logging was on."""


class DegenerateRunWarning(UserWarning):
    """The SFO budget is smaller than the first batch, so no update happens."""


class RateConditionWarning(UserWarning):
    """Run parameters fall outside the conditions of the convergence guarantees."""
