"""Exception types shared across the package."""


class ParetoMarketError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(ParetoMarketError, ValueError):
    """A function argument is outside its documented domain."""


class ConfigurationError(ParetoMarketError, ValueError):
    """An economy or run configuration is inconsistent or infeasible."""


class PackingError(ParetoMarketError, RuntimeError):
    """No feasible initial allocation was found within the retry budget."""


class DegenerateInputError(ParetoMarketError, ValueError):
    """Input data carries no usable signal (e.g. all-zero values)."""


class FitDomainError(ParetoMarketError, ValueError):
    """A fitted quantity falls outside the model's valid domain."""


class RegimeError(ParetoMarketError, ValueError):
    """A closed-form expression was evaluated outside its regime of validity."""


class EnumerationCapError(ParetoMarketError, RuntimeError):
    """An exact enumeration would exceed the configured size cap."""


class SolverError(ParetoMarketError, RuntimeError):
    """A self-consistency solve failed to converge or has no root."""
