"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid run configuration (bad grid, bad parameter, missing key)."""


class DegenerateInputError(ValueError):
    """Input data carries no usable signal (e.g. an all-zero histogram)."""


class UnsupportedModeError(ValueError):
    """Operation called in a mode its inputs cannot support."""
