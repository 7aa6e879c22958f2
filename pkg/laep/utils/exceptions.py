class LAEPError(Exception):
    """Base exception for every failure the library reports."""

    exit_code = 3

    def __init__(self, message="LAEP operation failed"):
        self.message = message
        super().__init__(self.message)


class ValidationError(LAEPError):
    """Raised when inputs violate a documented precondition or invariant."""

    exit_code = 2


class DimensionMismatchError(ValidationError):
    """Raised when array shapes disagree with the model structure."""


class ConservationError(ValidationError):
    """Raised when a (iteration, layer) row does not sum to S * top_k."""

    def __init__(self, iteration: int, layer: int, actual: int, expected: int):
        self.iteration = iteration
        self.layer = layer
        self.actual = actual
        self.expected = expected
        super().__init__(
            f"Conservation violated at iteration {iteration}, layer {layer}: "
            f"routed {actual} slots, expected {expected}"
        )


class TraceFormatError(ValidationError):
    """Raised when a trace file cannot be parsed."""

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValidationError):
    """Raised when a configuration file or flag is missing, unknown or malformed."""

    def __init__(self, message: str, key: str = None):
        self.key = key
        super().__init__(message)


class StabilityNotFoundError(LAEPError):
    """Raised when no stable iteration exists under the chosen rule."""


class TrainingDivergedError(LAEPError):
    """Raised when the toy trainer produces a non-finite loss."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"Training diverged at iteration {iteration} (loss={loss})")
