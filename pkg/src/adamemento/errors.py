"""Exception hierarchy shared across the package."""


class AdaMementoError(Exception):
    pass


class ConfigError(AdaMementoError, ValueError):
    """Bad configuration key, value or environment name."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ValidationError(AdaMementoError, ValueError):
    pass


class UsageError(AdaMementoError, RuntimeError):
    pass


class ContractError(AdaMementoError, ValueError):
    """A documented precondition of an operation does not hold."""


class DegenerateGapError(ContractError):
    """Every action of some state ties in Q*; the MDP must be resampled."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


class NumericalError(AdaMementoError, FloatingPointError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class EmptyBufferError(AdaMementoError, LookupError):
    pass


class TrainingAbort(AdaMementoError, RuntimeError):
    def __init__(self, message, update=None, minibatch=None):
        super().__init__(message)
        self.update = update
        self.minibatch = minibatch


class CompatibilityError(AdaMementoError, ValueError):
    pass
