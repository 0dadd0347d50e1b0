import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asep2d.errors import ParameterError, RefinementError
from asep2d.kintegral import (
    KIntegralSpec, K_closed_form_kappa0, K_integral, restricted_bad_region, trivial_bound_integral,
)


@pytest.mark.parametrize("lam", [1e-4, 1e-8, 1e-12])
def test_kappa0_closed_form(lam):
    assert K_integral(KIntegralSpec(0.0, 1.5, 0.0, 0.0, lam)) == pytest.approx(K_closed_form_kappa0(lam, 1.5), rel=1e-9)


def test_kappa0_grows_like_log():
    # K ~ pi |log lam| up to O(log log)
    for lam in (1e-20, 1e-40):
        K = K_closed_form_kappa0(lam, 1.5)
        L = abs(np.log(lam))
        assert abs(K - np.pi * L) < 10 * np.pi * np.log(L)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1e-12, 1e-3), st.floats(0.0, 1e-6))
def test_monotone_in_kappa_and_a(kappa, lam, a2):
    base = K_integral(KIntegralSpec(kappa, 1.5, a2, 0.0, lam))
    more_k = K_integral(KIntegralSpec(min(1.0, kappa + 0.1), 1.5, a2, 0.0, lam))
    more_a = K_integral(KIntegralSpec(kappa, 1.5, a2 + 1e-6, 0.0, lam))
    assert more_k <= base * (1 + 1e-10)
    assert more_a <= base * (1 + 1e-10)


def test_refinement_converged():
    s = KIntegralSpec(0.5, 1.5, 0.0, 0.0, 1e-9)
    a = K_integral(s)
    b = K_integral(KIntegralSpec(0.5, 1.5, 0.0, 0.0, 1e-9, radial_cells=192, order=12))
    assert a == pytest.approx(b, rel=1e-10)


def test_too_coarse_rejected():
    with pytest.raises(RefinementError):
        K_integral(KIntegralSpec(0.5, 1.5, 0.0, 0.0, 1e-6, radial_cells=8))


def test_validation():
    with pytest.raises(ParameterError):
        KIntegralSpec(2.0, 1.5, 0, 0, 1e-6)
    with pytest.raises(ParameterError):
        KIntegralSpec(0.5, 0.9, 0, 0, 1e-6)


def test_trivial_bound_dominates():
    lam = 1e-9
    assert trivial_bound_integral(lam) >= K_integral(KIntegralSpec(1.0, 1.5, 0, 0, lam))


def test_restricted_bad_region_positive():
    assert restricted_bad_region(1e-9) > 0
