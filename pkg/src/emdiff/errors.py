"""Exception types raised across the package."""


class EmdiffError(Exception):
    """Base class for package errors."""


class ConfigurationError(EmdiffError, ValueError):
    """Invalid parameters, specs, or predictor/sampler pairings."""


class ArgumentError(EmdiffError, ValueError):
    """An argument is outside the domain of an operation."""


class FormatError(EmdiffError, ValueError):
    """A data file does not match its declared format."""


class ContractViolation(EmdiffError):
    """An experiment's stated contract did not hold."""
