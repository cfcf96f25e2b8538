"""Exception types shared across the package."""


class EfdnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EfdnError):
    """Tensor or kernel shapes are incompatible with the requested operation."""


class ConfigError(EfdnError):
    """A parameter set or specification is malformed (e.g. even kernel size)."""


class InputError(EfdnError):
    """User-supplied data (images, datasets, files) is unusable."""


class UsageError(EfdnError):
    """An operation was invoked in a state it does not support."""


class WeightsFormatError(EfdnError):
    """A weights container is malformed or inconsistent."""
