"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A run/problem/estimator configuration is malformed or inconsistent."""


class DataError(ValueError):
    """Input data violates a precondition (e.g. labels outside {-1, +1})."""
