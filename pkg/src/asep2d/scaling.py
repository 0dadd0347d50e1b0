"""Exponent bookkeeping: kappa schedules, log-power fits and bound envelopes."""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParameterError, RangeError

FIXED_POINT = Fraction(2, 3)


@dataclass(frozen=True)
class KappaSchedule:
    """Exact exponents kappa_1 .. kappa_K (``values[0]`` is kappa_1)."""

    N: int
    values: tuple
    alternate: bool = False

    def __getitem__(self, n):
        if not 1 <= n <= len(self.values):
            raise IndexError(f"kappa_{n} outside 1..{len(self.values)}")
        return self.values[n - 1]

    def __len__(self):
        return len(self.values)

    def recursion_holds(self):
        """kappa_{n-1} == 1 - kappa_n / 2 for every adjacent pair."""
        return all(self[n - 1] == 1 - self[n] / 2 for n in range(2, len(self) + 1))


def kappa_schedule(N, alternate=False):
    """Exact schedule kappa_n = 2/3 + (-1)^n 2^(n - 2N) / 3, n = 1 .. 2N + 1.

    With ``alternate`` the variant kappa_n = 2/3 - (-1)^n 2^(n + 1 - 2N) / 3,
    n = 1 .. 2N, which ends at kappa_2N = 0 and kappa_{2N-1} = 1.
    """
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N}")
    N = int(N)
    third = Fraction(1, 3)
    if alternate:
        vals = [FIXED_POINT - (-1) ** n * Fraction(2) ** (n + 1 - 2 * N) * third for n in range(1, 2 * N + 1)]
    else:
        vals = [FIXED_POINT + (-1) ** n * Fraction(2) ** (n - 2 * N) * third for n in range(1, 2 * N + 2)]
    return KappaSchedule(N, tuple(vals), alternate)


def iterate_kappa(start, steps):
    """Iterates of kappa <- 1 - kappa/2 in exact arithmetic (start included)."""
    k = Fraction(start)
    out = [k]
    for _ in range(steps):
        k = 1 - k / 2
        out.append(k)
    return out


@dataclass
class ScalingFit:
    """Least-squares fit log(value) = c + kappa * log(X) (+ loglog correction)."""

    x: np.ndarray
    values: np.ndarray
    variable: str
    kappa: float
    intercept: float
    residuals: np.ndarray
    loglog_exponent: float = float("nan")
    window_kappas: tuple = ()
    flags: list = field(default_factory=list)

    @property
    def window_spread(self):
        if len(self.window_kappas) < 2:
            return 0.0
        return float(abs(self.window_kappas[1] - self.window_kappas[0]))

    @property
    def asymptotic(self):
        return "non-asymptotic" not in self.flags


def _abscissa(x, variable):
    x = np.asarray(x, dtype=float)
    if variable == "lambda":
        if np.any((x <= 0) | (x >= 1)):
            raise ParameterError("lambda values must lie in (0, 1)")
        return np.abs(np.log(x)), np.log10(x)
    if variable == "t":
        if np.any(x <= 1):
            raise ParameterError("t values must exceed 1")
        return np.log(x), np.log10(x)
    raise ParameterError(f"unknown variable {variable!r}")


def _lstsq(X, y):
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, y - A @ coef


def fit_log_power(x, values, variable="lambda", min_decades=5.0, loglog=False, window_tol=0.1):
    """Fit values ~ |log lambda|^kappa (or (log t)^kappa).

    Parameters
    ----------
    x : array_like
        Lambda values in (0, 1) or times t > 1.
    values : array_like
        Positive observations.
    min_decades : float
        Required span log10(max x / min x); smaller spans raise RangeError.
    loglog : bool
        Also fit a |log log log|^2 envelope term and report its coefficient.
    window_tol : float
        Spread of the exponent between the two half windows above which the
        fit is flagged non-asymptotic.
    """
    values = np.asarray(values, dtype=float)
    X, dec = _abscissa(x, variable)
    if values.shape != X.shape or X.size < 3:
        raise ParameterError("need at least three (x, value) pairs of equal length")
    if np.any(values <= 0):
        raise ParameterError("values must be positive for a log-power fit")
    span = float(dec.max() - dec.min())
    if span < min_decades - 1e-9:
        raise RangeError(f"data span {span:.2f} decades, need {min_decades}")
    order = np.argsort(X)
    X, values = X[order], values[order]
    lx, ly = np.log(X), np.log(values)
    (c0, k), res = _lstsq(lx, ly)
    fit = ScalingFit(np.asarray(x)[order], values, variable, float(k), float(c0), res)
    half = (X.size + 1) // 2
    if X.size >= 4:
        k_lo = _lstsq(lx[:half], ly[:half])[0][1]
        k_hi = _lstsq(lx[-half:], ly[-half:])[0][1]
        fit.window_kappas = (float(k_lo), float(k_hi))
        if fit.window_spread > window_tol:
            fit.flags.append("non-asymptotic")
    if loglog:
        lll = np.log(np.log(X))
        if np.all(lll > 0):
            A = np.column_stack([np.ones_like(lx), lx, lll**2])
            coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
            fit.loglog_exponent = float(coef[2])
        else:
            warnings.warn("log log log undefined on part of the range; envelope term skipped")
    return fit


def local_exponent(x, values, variable="lambda"):
    """Logarithmic derivative d log(value) / d log(X) by central differences."""
    X, _ = _abscissa(x, variable)
    order = np.argsort(X)
    return np.gradient(np.log(np.asarray(values, dtype=float)[order]), np.log(X[order]))


def bound_envelope(lambdas, gamma):
    """Lower and upper curves lam^-2 |log lam|^(2/3) exp(-/+ gamma |log log log lam|^2)."""
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    lam = np.asarray(lambdas, dtype=float)
    if np.any((lam <= 0) | (lam >= np.exp(-1.0))):
        raise ParameterError("lambda must lie in (0, 1/e)")
    L = np.abs(np.log(lam))
    base = lam**-2.0 * L ** (2.0 / 3.0)
    width = gamma * np.log(np.log(L)) ** 2
    return base * np.exp(-width), base * np.exp(width)


def fit_envelope_gamma(lambdas, transform_values):
    """Smallest gamma placing every value inside the envelope pair."""
    lam = np.asarray(lambdas, dtype=float)
    L = np.abs(np.log(lam))
    base = lam**-2.0 * L ** (2.0 / 3.0)
    lll2 = np.log(np.log(L)) ** 2
    need = np.abs(np.log(np.asarray(transform_values) / base)) / lll2
    return float(np.max(need))


def drift_report(values_by_depth, lambdas, variable="lambda"):
    """Local exponent at each depth, evaluated at the middle of ``lambdas``.

    ``values_by_depth`` maps depth n to values on ``lambdas``.  The report is
    descriptive; no monotonicity is asserted.
    """
    rows = []
    mid = len(lambdas) // 2
    for n in sorted(values_by_depth):
        loc = local_exponent(lambdas, values_by_depth[n], variable)
        order = np.argsort(_abscissa(lambdas, variable)[0])
        lam_sorted = np.asarray(lambdas)[order]
        rows.append((n, float(lam_sorted[mid]), float(loc[mid])))
    return rows
