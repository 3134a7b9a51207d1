"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class NumericalFailureError(RuntimeError):
    pass


class KernelWindowError(NumericalFailureError):
    """Quadrature time window truncates a non-negligible part of the pulse."""


class IllConditionedError(NumericalFailureError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DivergedError(NumericalFailureError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass
