"""Exception hierarchy used across the package."""


class ScrapKFError(Exception):
    """Base class for all package errors."""


class DomainError(ScrapKFError, ValueError):
    """An argument lies outside the domain of the operation."""


class MomentMatchingError(DomainError):
    """Beta moment matching is infeasible for at least one component."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalFailure(ScrapKFError, ArithmeticError):
    """A variance or denominator that must be positive was not."""


class DecompositionError(NumericalFailure):
    """Cholesky factorisation failed even after the maximum jitter."""


class SolverError(ScrapKFError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GenerationError(ScrapKFError, ValueError):
    """Synthetic data could not be generated from the given configuration."""


class HeatsParseError(ScrapKFError, ValueError):
    """A heats CSV file failed validation; ``errors`` lists (line, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors[:20])
        more = "" if len(self.errors) <= 20 else f" (+{len(self.errors) - 20} more)"
        super().__init__(f"{len(self.errors)} invalid row(s): {lines}{more}")
