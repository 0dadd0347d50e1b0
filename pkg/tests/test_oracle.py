import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asep2d.errors import CapacityError, ParameterError
from asep2d.oracle import (
    CanonicalEnsemble, build_generator, canonical_pair_mean, canonical_w_moments, conservation_residuals,
    degree_two_current, exact_current_variance, exact_resolvent, stationarity_residuals,
    verify_duality_degree2,
)


@pytest.fixture(scope="module")
def gen44():
    return build_generator(4, 4, 8)


def test_tiny_ensemble():
    g = build_generator(2, 2, 1)
    assert g.size == 4
    assert max(stationarity_residuals(g)) < 1e-15


@settings(max_examples=8, deadline=None)
@given(st.integers(2, 3), st.integers(2, 3), st.data())
def test_doubly_stochastic_and_conservation(Lx, Ly, data):
    k = data.draw(st.integers(0, Lx * Ly))
    g = build_generator(Lx, Ly, k)
    assert max(stationarity_residuals(g)) < 1e-12
    assert conservation_residuals(g)["balance"] < 1e-12


def test_literal_orientation_fails():
    assert conservation_residuals(build_generator(3, 3, 4))["literal"] > 0.5


def test_canonical_moments_enumerated(gen44):
    ens = gen44.ensemble
    mean, var = canonical_w_moments(ens)
    # E[(eta-1/2)(eta'-1/2) | k=8, V=16] = 56/240 - 1/2 + 1/4 = -1/60
    assert mean == pytest.approx(-1 / 60)
    assert canonical_pair_mean(16, 8) == pytest.approx(-1 / 60)
    assert var == pytest.approx(14 / 225)
    W = degree_two_current(ens, centered=True)
    assert abs(W.mean()) < 1e-12


def test_resolvent_positive_decreasing_and_large_lambda(gen44):
    vals = [exact_resolvent(gen44, lam).value for lam in (0.01, 0.1, 1.0, 1e4)]
    assert all(v > 0 for v in vals)
    assert vals == sorted(vals, reverse=True)
    # lam * value -> Var(W)/V
    assert 1e4 * vals[-1] == pytest.approx(14 / 225, rel=1e-3)


def test_variance_small_time_and_long_time(gen44):
    var = exact_current_variance(gen44, [1e-3, 50.0])
    # Var J(t) ~ t^2 Var W for small t
    assert var[0] / 1e-6 == pytest.approx(14 / 225 * 16, rel=1e-2)
    # long time: Var J(t)/t -> 2 <W,(-L)^-1 W>, approached from below
    assert var[1] / 50.0 / 16 < 2 * exact_resolvent(gen44, 1e-6).value


def test_duality_degree2():
    rep = verify_duality_degree2(3, 3)
    assert rep.ok
    assert set(rep.degree_change) <= {-1, 1}


def test_errors():
    with pytest.raises(CapacityError):
        CanonicalEnsemble.build(6, 6, 18, cap=1000)
    with pytest.raises(ParameterError):
        exact_resolvent(build_generator(2, 2, 1), 0.0)
