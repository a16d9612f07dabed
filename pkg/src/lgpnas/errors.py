"""Exception types shared across the package."""


class LgpnasError(Exception):
    """Base class for all package errors."""


class ConfigError(LgpnasError):
    """Invalid configuration (bad proportions, bounds, schema violations)."""


class StructuralError(LgpnasError):
    """Genotype has no data-flow path to the output register."""


class ParseError(LgpnasError):
    """Malformed genotype text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(LgpnasError):
    """Tensor/layer geometry mismatch."""


class TrainingError(LgpnasError):
    """Non-finite loss or other failure during network training."""


class InsufficientDataError(LgpnasError):
    """Too few training points to fit a surrogate."""


class FitError(LgpnasError):
    """Surrogate fitting failed (correlation matrix not factorizable)."""


class ReportError(LgpnasError):
    """Run directory incomplete or report inputs missing."""
