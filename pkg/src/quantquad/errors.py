"""Exception types shared across the package."""


class QuantQuadError(Exception):
    """Base class for all library errors."""


class ConfigurationError(QuantQuadError):
    """Invalid parameters, incompatible spaces, or malformed inputs."""


class NumericError(QuantQuadError):
    """A computation produced non-finite values.

    ``step`` and ``sample`` locate the failure inside a recursion or a
    sample batch when that information is available.
    """

    def __init__(self, message, step=None, sample=None):
        super().__init__(message)
        self.step = step
        self.sample = sample
