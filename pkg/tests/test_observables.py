import warnings

import numpy as np
import pytest

from asep2d.errors import ParameterError
from asep2d.observables import (
    DiffusivityCurve, canonical_w_mean, diffusivity_from_counts, diffusivity_from_moments,
    diffusivity_green_kubo, jackknife, laplace_transform_D, mean_right_current, measure_structure_function,
    run_ensemble,
)


@pytest.fixture(scope="module")
def run64():
    return run_ensemble(64, 64, 0.5, np.arange(0, 8.01, 1.0), 96, seed=5)


def test_gk_and_moments_agree(run64):
    gk = diffusivity_green_kubo(run64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mom = diffusivity_from_moments(measure_structure_function(run64))
    z = (gk.D11 - mom.D11) / np.hypot(gk.D11_err, mom.D11_err)
    assert np.all(np.abs(z) < 3.5)


def test_counts_route_consistent(run64):
    gk = diffusivity_green_kubo(run64)
    cnt = diffusivity_from_counts(run64)
    z = (gk.D11 - cnt.D11) / np.hypot(gk.D11_err, cnt.D11_err)
    assert np.all(np.abs(z) < 3.5)


def test_sum_rule_total_constant(run64):
    corr = measure_structure_function(run64)
    tot, err = corr.total()
    assert np.all(np.abs(tot - 0.25) < 3.5 * err + 1e-12)


def test_gk_intercept_one_half():
    run = run_ensemble(16, 16, 0.5, [0.01, 0.02], 200, seed=2, correlations=False)
    gk = diffusivity_green_kubo(run)
    assert np.all(np.abs(gk.D11 - 0.5) < 0.01)


def test_d11_trend_nondecreasing():
    run = run_ensemble(32, 32, 0.5, [1.0, 10.0, 40.0], 200, seed=3, correlations=False)
    gk = diffusivity_green_kubo(run)
    assert gk.D11[-1] > gk.D11[0] - 3 * np.hypot(gk.D11_err[0], gk.D11_err[-1])


def test_symmetric_dynamics_flat_D22():
    run = run_ensemble(32, 32, 0.5, [2.0, 6.0, 20.0], 150, seed=4, rates=(0.0, 0.5, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = diffusivity_from_moments(measure_structure_function(run), axis=2)
    z = (d.D11[-1] - d.D11[0]) / np.hypot(d.D11_err[0], d.D11_err[-1])
    assert abs(z) < 3.5


def test_right_current_quarter_density():
    run = run_ensemble(32, 32, 0.25, [20.0], 100, seed=9, correlations=False)
    mean, err = mean_right_current(run)
    assert abs(mean - 3 / 16) < 3 * err + 2e-3  # O(1/V) Bernoulli-vs-canonical slack


def test_laplace_of_constant():
    # trapezoid error is h^2/12 * c relative to c/lam^2 scale; h = 0.01 keeps it below 1e-5
    t = np.arange(1, 40001) * 0.01
    curve = DiffusivityCurve(t, np.full(t.size, 0.7), np.zeros(t.size))
    for lam in (0.05, 0.5):
        assert laplace_transform_D(curve, lam).value == pytest.approx(0.7 / lam**2, rel=1e-4)


def test_laplace_monotone_in_lambda():
    t = np.linspace(0.1, 400.0, 4000)
    curve = DiffusivityCurve(t, 0.5 + 0.1 * np.log1p(t), np.zeros(t.size))
    v = [laplace_transform_D(curve, lam).value for lam in (1.0, 0.3, 0.1)]
    assert v[0] < v[1] < v[2]


def test_laplace_warns_on_short_window():
    t = np.linspace(0.1, 10.0, 100)
    curve = DiffusivityCurve(t, np.full(t.size, 0.5), np.zeros(t.size))
    with pytest.warns(UserWarning):
        laplace_transform_D(curve, 0.1)


def test_jackknife_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 3))
    sizes = np.full(10, 5.0)
    val, err = jackknife(x * 5, sizes, lambda m: m)
    assert np.allclose(val, x.mean(axis=0))
    assert np.allclose(err, x.std(axis=0, ddof=1) / np.sqrt(10))


def test_canonical_w_mean_at_half_fill():
    assert canonical_w_mean(16, 8, 0.5) == pytest.approx(-1 / 60)


def test_errors():
    with pytest.raises(ParameterError):
        run_ensemble(4, 4, 0.5, [1.0], 1)
    run = run_ensemble(4, 4, 0.5, [1.0], 4, correlations=False)
    with pytest.raises(ParameterError):
        measure_structure_function(run)
