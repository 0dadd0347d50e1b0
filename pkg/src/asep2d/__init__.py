"""Two-dimensional asymmetric simple exclusion process laboratory.

Simulation and Green-Kubo diffusivity, brute-force generator oracle on tiny
tori, and the momentum-space resolvent hierarchy with its kappa recursion.
"""

from .errors import (
    CapacityError,
    NumericalError,
    ParameterError,
    RangeError,
    RefinementError,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "NumericalError",
    "ParameterError",
    "RangeError",
    "RefinementError",
    "__version__",
]
