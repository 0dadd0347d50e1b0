from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asep2d.errors import ParameterError, RangeError
from asep2d.scaling import (
    bound_envelope, drift_report, fit_envelope_gamma, fit_log_power, iterate_kappa, kappa_schedule,
    local_exponent,
)


@pytest.mark.parametrize("N", [2, 5, 20])
def test_schedule_listed_values(N):
    s = kappa_schedule(N)
    K = 2 * N + 1
    assert s[K] == 0 and s[K - 1] == 1 and s[K - 2] == Fraction(1, 2)
    assert s[K - 3] == Fraction(2, 3) + Fraction(1, 12)
    assert s.recursion_holds()
    assert all(isinstance(v, Fraction) for v in s.values)


def test_alternate_schedule():
    s = kappa_schedule(5, alternate=True)
    assert s[10] == 0 and s[9] == 1 and s.recursion_holds()


@given(st.fractions(-10, 10))
def test_iteration_halves_error(start):
    it = iterate_kappa(start, 20)
    for a, b in zip(it, it[1:]):
        assert abs(b - Fraction(2, 3)) == abs(a - Fraction(2, 3)) / 2


def test_fixed_point_within_2_pow_20():
    assert abs(iterate_kappa(Fraction(0), 20)[-1] - Fraction(2, 3)) <= Fraction(1, 2**20)


@given(st.floats(0.1, 2.0), st.floats(0.1, 10.0))
def test_fit_recovers_synthetic_power(kappa, c):
    lam = np.logspace(-3, -12, 10)
    fit = fit_log_power(lam, c * np.abs(np.log(lam)) ** kappa)
    assert fit.kappa == pytest.approx(kappa, abs=1e-8)
    assert fit.asymptotic


def test_fit_rejects_short_window():
    lam = np.logspace(-3, -5, 5)
    with pytest.raises(RangeError):
        fit_log_power(lam, np.abs(np.log(lam)))


def test_fit_flags_drifting_exponent():
    lam = np.logspace(-2, -40, 20)
    L = np.abs(np.log(lam))
    fit = fit_log_power(lam, L**0.2 + L**1.5 / 50)
    assert "non-asymptotic" in fit.flags


def test_envelopes_bracket_and_ratio():
    lam = np.logspace(-6, -30, 7)
    base = lam**-2.0 * np.abs(np.log(lam)) ** (2 / 3)
    for gamma in (0.01, 1.0):
        lo, hi = bound_envelope(lam, gamma)
        assert np.all(lo <= base) and np.all(base <= hi)
    lo, hi = bound_envelope([1e-6], 0.3)
    lll = np.log(np.log(abs(np.log(1e-6))))
    assert hi[0] / lo[0] == pytest.approx(np.exp(2 * 0.3 * lll**2))
    with pytest.raises(ParameterError):
        bound_envelope(lam, 0.0)


def test_fit_envelope_gamma_places_values_inside():
    lam = np.logspace(-6, -12, 4)
    vals = lam**-2.0 * np.abs(np.log(lam)) ** 0.5
    g = fit_envelope_gamma(lam, vals)
    lo, hi = bound_envelope(lam, g * (1 + 1e-12))
    assert np.all(lo <= vals) and np.all(vals <= hi)


def test_local_exponent_and_drift_report():
    lam = np.logspace(-3, -9, 7)
    L = np.abs(np.log(lam))
    assert np.allclose(local_exponent(lam, L**0.5), 0.5)
    rows = drift_report({3: L**0.5, 4: L**0.7}, lam)
    assert [r[0] for r in rows] == [3, 4]
    assert rows[0][2] == pytest.approx(0.5) and rows[1][2] == pytest.approx(0.7)
