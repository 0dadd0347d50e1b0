class ParameterError(ValueError):
    """Invalid input parameter (density, lattice size, rate, grid mismatch)."""


class CapacityError(RuntimeError):
    """Requested object exceeds a configured size cap."""


class NumericalError(RuntimeError):
    """Iterative solver failed to converge.

    The final residual is kept on ``residual`` so callers can report it.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class RangeError(ValueError):
    """Data do not span enough dynamic range for a fit."""


class RefinementError(RuntimeError):
    """Quadrature does not resolve the integrand at the requested size."""
