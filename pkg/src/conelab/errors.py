"""Error types shared across the package."""


class CapacityError(RuntimeError):
    """A requested computation exceeds a desk-scale bound (enumeration size,
    quadrature dimension, Monte Carlo budget)."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation, e.g. a
    boundary point of the PSD cone where a strictly interior point is required."""


class NumericError(ArithmeticError):
    """A numerical kernel failed to converge or produced an invalid value."""


class FormulaUnavailableError(RuntimeError):
    """A variational formula was requested whose validity gate (the convexity
    probe of the nonlinearity) did not pass."""


class ContractionError(RuntimeError):
    """The characteristic fixed-point iteration failed to contract.

    Carries the empirical contraction quotient so the caller can tell whether
    the configured Lipschitz estimate was too small.
    """

    def __init__(self, message, quotient=None):
        super().__init__(message)
        self.quotient = quotient
