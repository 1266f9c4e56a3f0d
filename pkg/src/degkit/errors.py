class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class SolverError(RuntimeError):
    """An iterative solve failed to converge or hit a non-monotone interval."""


class FormatError(ValueError):
    """A file or manifest could not be parsed or has an unsupported version."""


class DegenerateError(ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""


class ConstraintError(DomainError):
    """A value is valid in general but violates a configured constraint (e.g. a preset range)."""
