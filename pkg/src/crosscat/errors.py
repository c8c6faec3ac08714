"""Exception hierarchy shared by every module."""


class CrossCatError(Exception):
    """Base class for all library errors."""


class DomainError(CrossCatError, ValueError):
    """Argument outside the domain of an operation (bad index, bad set, ...)."""


class ModelError(CrossCatError, ValueError):
    """Model parameters violate an invariant."""


class UnsupportedStructureError(DomainError):
    """Category graph shape not handled by the requested algorithm."""


class ConvergenceError(CrossCatError, RuntimeError):
    """Iterative routine hit its iteration cap."""


class EstimationError(CrossCatError, RuntimeError):
    """Internal consistency failure during estimation (e.g. EM lost monotonicity)."""


class DataError(CrossCatError, ValueError):
    """Malformed input data."""


class ConfigError(CrossCatError, ValueError):
    """Malformed experiment configuration."""
