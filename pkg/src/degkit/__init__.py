"""Physically based image degradations with spatial QA generation and scoring."""

__version__ = "0.1.0"

from .errors import ConstraintError, DegenerateError, DomainError, FormatError, SolverError  # noqa: E402,F401
