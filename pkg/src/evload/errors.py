"""Exception types shared across the package."""


class EvLoadError(Exception):
    """Base class of every error raised on purpose by this package."""


class DomainError(EvLoadError, ValueError):
    """An argument lies outside the domain where a model is defined."""


class SingularityError(DomainError):
    """A model term diverges at the requested point (e.g. a 1/soc term at soc = 0)."""


class ConvergenceError(EvLoadError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, *, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NumericalError(EvLoadError, RuntimeError):
    """A linear-algebra step failed or was too ill-conditioned to trust."""

    def __init__(self, message, *, condition=None):
        super().__init__(message)
        self.condition = condition


class CaseFormatError(EvLoadError, ValueError):
    """A case or data file violates its schema."""

    def __init__(self, message, *, line=None, column=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.column = column
        self.path = path


class ValidationError(EvLoadError, ValueError):
    """A parsed object violates a structural invariant."""
