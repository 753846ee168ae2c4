"""Exception and warning types shared across the toolkit.

The CLI maps these onto distinct exit codes, so keep the taxonomy flat:
validation problems, parse problems, and shape problems are separate
failure classes, not subclasses of one another.
"""


class ValidationError(ValueError):
    """A value violates a documented invariant (bad config, bad parameter)."""


class ModelDomainError(ValidationError):
    """Numeric input outside the model's domain (non-finite state, I <= 0, ...)."""


class DegenerateDataError(ValidationError):
    """Measurement data carries no usable signal (e.g. constant angle trace)."""


class ParseError(ValueError):
    """A file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(ValueError):
    """A table or trace file has the wrong shape (row count, columns)."""


class SingularityError(RuntimeError):
    """The arm Jacobian is (near-)singular; carries the normalized determinant."""

    def __init__(self, det: float):
        self.det = det
        super().__init__(f"Jacobian is singular (normalized |det| = {abs(det):.3e})")


class StepSizeWarning(UserWarning):
    """Integration step is coarse relative to the oscillation period."""


class DataInsufficiencyWarning(UserWarning):
    """Fit data is short or sparse; convergence is not guaranteed."""
