class PreconditionError(ValueError):
    """An input violates the documented precondition of an operation."""


class EnumerationLimitError(PreconditionError):
    """Exact latent-path enumeration was requested on an instance that is too large."""


class ConfigurationError(ValueError):
    """Inconsistent transformer weights or experiment configuration."""
