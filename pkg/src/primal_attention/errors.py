"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before converging."""

    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} sweeps)")
        self.iterations = iterations


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf; names the first offending tensor."""

    def __init__(self, tensor_name):
        super().__init__(f"non-finite values in tensor '{tensor_name}'")
        self.tensor_name = tensor_name


class DegenerateNormalizerError(ValueError):
    """A normalizer component that must be positive was not."""


class IllConditionedError(ValueError):
    """A singular value is too small to invert safely."""


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence threshold."""

    def __init__(self, message, last_row=None):
        super().__init__(message)
        self.last_row = last_row


class TapeError(RuntimeError):
    """Gradient tape misuse or corruption."""


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""
