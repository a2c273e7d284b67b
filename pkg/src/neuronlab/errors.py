"""Exception types shared across the package."""


class NeuronLabError(Exception):
    """Base class for all package errors."""


class DomainError(NeuronLabError, ValueError):
    """Input lies outside the domain of a function (e.g. non-finite z)."""


class UnsupportedOperationError(NeuronLabError, NotImplementedError):
    """Operation not defined for this object, e.g. sigma'' of a kink activation."""


class ConfigurationError(NeuronLabError, ValueError):
    """Invalid combination of numerical settings or run parameters."""
