"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the mathematically valid domain."""


class RegimeError(DomainError):
    """The (n, p) regime does not support the requested asymptotic calibration."""


class CloseSpikeError(DomainError):
    """A spike eigenvalue is too close to the bulk for the distant-spike formulas."""


class SingularCovarianceError(ValueError):
    """A log-determinant was requested for a rank-deficient sample covariance."""


class NumericError(ArithmeticError):
    """An internal numeric invariant failed (quadrature tolerance, log domain, ...)."""
