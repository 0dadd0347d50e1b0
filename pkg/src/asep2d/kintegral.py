"""The two-dimensional integral K_kappa^tau(a, b).

    K = int_{x^2 + y^2 <= |log lam|^(-2 tau)} dx dy
        [lam + b^2 + y^2 + (a^2 + x^2)(1 + |log(lam + a^2 + b^2 + x^2 + y^2)|^kappa)]^(-1)

The logarithmic factor depends on the radius only, so in polar coordinates
the angular integral is elementary,

    int_0^{2 pi} dt / (A + B cos^2 t + C sin^2 t) = 2 pi / sqrt((A + B)(A + C)),

and K reduces to a radial integral, done here by composite Gauss-Legendre on
geometrically graded cells.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RefinementError

MIN_RADIAL_CELLS = 32


@dataclass(frozen=True)
class KIntegralSpec:
    kappa: float
    tau: float
    a2: float
    b2: float
    lam: float
    radial_cells: int = 96
    order: int = 8

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ParameterError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.tau <= 1.0:
            raise ParameterError(f"tau must exceed 1, got {self.tau}")
        if not 0.0 < self.lam < 1.0:
            raise ParameterError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.a2 < 0 or self.b2 < 0:
            raise ParameterError("a2 and b2 must be nonnegative")

    @property
    def radius(self):
        return abs(np.log(self.lam)) ** (-self.tau)


def _radial_rule(R, inner, cells, order):
    """Gauss nodes on [0, R] with cells graded geometrically down to ``inner``."""
    edges = R * (inner / R) ** (np.arange(cells) / (cells - 1.0))
    edges = np.append(edges, 0.0)[::-1]
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


def K_integral(spec):
    """Evaluate K_kappa^tau(a, b) for ``spec``; see the module docstring."""
    if spec.radial_cells < MIN_RADIAL_CELLS:
        raise RefinementError(
            f"{spec.radial_cells} radial cells inside the disc, need at least {MIN_RADIAL_CELLS}"
        )
    R = spec.radius
    lam, a2, b2, kappa = spec.lam, spec.a2, spec.b2, spec.kappa
    # the integrand varies on the scale sqrt(lam + a2 + b2)
    inner = min(0.01 * np.sqrt(lam + a2 + b2), 0.5 * R)
    rho, w = _radial_rule(R, inner, spec.radial_cells, spec.order)
    r2 = rho * rho
    g = 1.0 + np.abs(np.log(lam + a2 + b2 + r2)) ** kappa
    A = lam + b2 + a2 * g
    ang = 2.0 * np.pi / np.sqrt((A + r2 * g) * (A + r2))
    return float(np.sum(w * rho * ang))


def K_closed_form_kappa0(lam, tau):
    """K at a = b = 0, kappa = 0, where the radial integral is elementary."""
    R2 = abs(np.log(lam)) ** (-2.0 * tau)
    top = np.sqrt(R2 + 0.5 * lam) + np.sqrt(R2 + lam)
    bottom = np.sqrt(0.5 * lam) + np.sqrt(lam)
    return float(np.pi * np.sqrt(2.0) * np.log(top / bottom))


def trivial_bound_integral(lam, a2=0.0, b2=0.0, cells=96, order=8):
    """int over [-pi, pi]^2 of 1/(lam + a^2 + b^2 + omega(x, y)), the unrestricted integral."""
    x, w = np.polynomial.legendre.leggauss(order)
    floor = 0.01 * np.sqrt(lam + a2 + b2)
    edges = np.pi * (floor / np.pi) ** (np.arange(cells) / (cells - 1.0))
    edges = np.append(edges, 0.0)[::-1]
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    wts = (0.5 * (hi - lo) * w).ravel()
    om = 4.0 * np.sin(0.5 * nodes) ** 2
    return float(4.0 * np.sum(np.outer(wts, wts) / (lam + a2 + b2 + om[:, None] + om[None, :])))


def restricted_bad_region(lam, m=1.0, P=None, c=0.0, cells=96, order=8):
    """Pair integral over a disc around fixed total momentum P (bad-region error term).

    Integrates |e^{i r_n} - e^{-i r_{n+1}}|^2 / (lam + c + omega(p_n) + omega(p_{n+1}))
    over k = p_n - p_{n+1} with |k|^2 <= |log lam|^{2m} (|P|^2 + c), where
    P = p_n + p_{n+1} is held fixed.  The numerator equals omega(P_r) identically,
    and the result grows like |log log lam| rather than |log lam|.
    """
    if P is None:
        P = (lam**0.25, 0.0)
    Pr, Ps = P
    R = abs(np.log(lam)) ** m * np.sqrt(Pr * Pr + Ps * Ps + c)
    if R > np.pi:
        raise ParameterError(f"restricted disc radius {R:.3g} leaves the torus")
    inner = 0.01 * np.sqrt(lam + c + Pr * Pr + Ps * Ps)
    rho, w = _radial_rule(R, min(inner, 0.5 * R), cells, order)
    th, tw = np.polynomial.legendre.leggauss(64)
    th = np.pi * (th + 1.0)
    tw = np.pi * tw
    kr = rho[:, None] * np.cos(th)[None, :]
    ks = rho[:, None] * np.sin(th)[None, :]
    rn, sn = 0.5 * (Pr + kr), 0.5 * (Ps + ks)
    rm, sm = 0.5 * (Pr - kr), 0.5 * (Ps - ks)
    num = np.abs(np.exp(1j * rn) - np.exp(-1j * rm)) ** 2
    om = 4.0 * (np.sin(rn / 2) ** 2 + np.sin(sn / 2) ** 2 + np.sin(rm / 2) ** 2 + np.sin(sm / 2) ** 2)
    integrand = num / (lam + c + om)
    return float(np.sum((w * rho)[:, None] * tw[None, :] * integrand))
