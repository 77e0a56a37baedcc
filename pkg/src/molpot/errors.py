"""Exception types shared across the package."""


class MolpotError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(MolpotError):
    """Structural shape mismatch inside the differentiation engine."""


class NonScalarError(MolpotError):
    """A gradient was requested of a non-scalar expression."""


class GradModeError(MolpotError):
    """Differentiation through a gradient that was not recorded for it.

    Raised instead of silently returning a truncated second-order result
    when an expression contains the output of ``grad(..., create_graph=False)``.
    """


class DegenerateGeometryError(MolpotError):
    """Two atoms are (numerically) coincident."""


class UnsupportedElementError(MolpotError):
    """Atomic number outside the embedding table or mass table."""


class NumericalDivergenceError(MolpotError):
    """A non-finite value appeared during evaluation or training."""


class ConfigurationError(MolpotError):
    """Invalid or inconsistent run/model configuration."""


class DataError(MolpotError):
    """Labels or input data violate a documented invariant."""


class ExtXYZParseError(MolpotError):
    """Malformed extended-XYZ input.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
