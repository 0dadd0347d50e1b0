"""Acceptance criteria 1-10.

Each criterion prints one ``CRITERION n: PASS|FAIL  detail`` line (collected
again in the pytest terminal summary).  Run standalone with

    python3 tests/test_acceptance.py [n ...]
"""

import sys
import time
import warnings
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from asep2d.fourier import MomentumGrid
from asep2d.hierarchy import (
    NestedResolventSpec, check_interlacing, diagonal_depth_values, graded_grid_for,
    resolvent_truncated, resolvent_with_refinement, verify_main_estimate_sandwich,
)
from asep2d.kintegral import KIntegralSpec, K_integral
from asep2d.observables import (
    current_variance, diffusivity_from_moments, laplace_transform_D, measure_structure_function,
    run_ensemble,
)
from asep2d.oracle import build_generator, conservation_residuals, exact_current_variance, exact_resolvent, stationarity_residuals
from asep2d.scaling import drift_report, fit_log_power, iterate_kappa, kappa_schedule

RESULTS = {}
CHI = 0.25


@lru_cache(maxsize=None)
def oracle44():
    return build_generator(4, 4, 8)


@lru_cache(maxsize=None)
def mc44():
    # canonical k = 8 replicas of the oracle ensemble
    return run_ensemble(4, 4, 0.5, np.arange(0.0, 200.0 + 1e-9, 0.1), 2000, seed=20240501,
                        canonical=True, correlations=False)


def criterion_1():
    t0 = time.time()
    g = oracle44()
    rows, cols = stationarity_residuals(g)
    cons = conservation_residuals(g)
    dt = time.time() - t0
    ok = g.size == 12870 and rows <= 1e-12 and cols <= 1e-12 and cons["balance"] == 0.0 and dt < 60
    return ok, (f"states={g.size} row={rows:.1e} col={cols:.1e} continuity max dev={cons['balance']:.1e} "
                f"(orientation-literal form dev={cons['literal']:.1f}) {dt:.1f}s")


def criterion_2():
    g = oracle44()
    run = mc44()
    parts, ok = [], True
    for lam in (0.05, 0.2, 1.0):
        ov = exact_resolvent(g, lam).value
        r = laplace_transform_D(run, lam, oracle_value=ov)
        tol = 3 * r.error + 0.01 * abs(r.identity_rhs)
        ok &= abs(r.value - r.identity_rhs) <= tol
        parts.append(f"lam={lam}: MC {r.value:.4f}+-{r.error:.4f} vs {r.identity_rhs:.4f}")
    return ok, "; ".join(parts)


def criterion_3():
    g = oracle44()
    run = mc44()
    var, err = current_variance(run)
    parts, ok = [], True
    exact = exact_current_variance(g, [1.0, 5.0, 20.0])
    for t, ex in zip((1.0, 5.0, 20.0), exact):
        i = int(np.argmin(np.abs(run.t_grid - t)))
        lhs = var[i] / t / (CHI * run.V)
        lhs_err = err[i] / t / (CHI * run.V)
        rhs = exact_resolvent(g, 1.0 / t).value / CHI
        ok &= lhs <= rhs + 3 * lhs_err
        parts.append(f"t={t:g}: {lhs:.4f}+-{lhs_err:.4f} vs {rhs:.4f} (exact ratio {ex / t / g.ensemble.V / rhs / CHI:.3f})")
    return ok, "; ".join(parts)


def criterion_4():
    t_grid = [1.0, 2.0, 5.0, 10.0, 20.0]
    parts, ok = [], True
    for L in (64, 32):
        run = run_ensemble(L, L, 0.5, t_grid, 200, seed=404 + L)
        corr = measure_structure_function(run)
        tot, tot_e = corr.total()
        first, first_e = corr.first_moment()
        z_tot = np.max(np.abs(tot - 0.25) / tot_e)
        z_first = np.max(np.abs(first) / first_e)
        if L == 64:
            ok &= bool(z_tot <= 3 and z_first <= 3)
        parts.append(f"{L}^2 rho=1/2: max|z| sum S={z_tot:.2f}, sum x1 S={z_first:.2f}")
    run = run_ensemble(64, 64, 0.25, [0.0, 2.0, 5.0, 10.0], 200, seed=4041)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = diffusivity_from_moments(measure_structure_function(run))
    v, ve = curve.velocity[-1], curve.velocity_err[-1]
    vok = abs(v - 1.0) <= 3 * ve
    ok &= bool(vok)
    parts.append(f"64^2 rho=1/4: v1={v:.3f}+-{ve:.3f} (target 1, 1-2rho={0.5})")
    return ok, "; ".join(parts)


def criterion_5():
    t0 = time.time()
    lams = np.logspace(-3, -8, 6)
    vals, deltas = [], []
    for lam in lams:
        r = resolvent_with_refinement(NestedResolventSpec(3, lam, graded_grid_for(lam, 3)))
        vals.append(r.value)
        deltas.append(r.refinement_delta)
    fit = fit_log_power(lams, vals)
    dt = time.time() - t0
    ok = 0.4 <= fit.kappa <= 0.6 and max(deltas) < 0.02 and dt < 7200
    return ok, (f"kappa_hat={fit.kappa:.4f} windows=({fit.window_kappas[0]:.3f}, {fit.window_kappas[1]:.3f}) "
                f"max refinement delta={max(deltas):.1e} {dt:.0f}s")


def criterion_6():
    tau = 1.5
    lams = (1e-6, 1e-9, 1e-12)
    worst, ok = 0.0, True
    for kappa in (0.0, 0.5, 2.0 / 3.0, 1.0):
        for case in ("zero", "edge"):
            ratios = []
            for lam in lams:
                ab = 0.0 if case == "zero" else abs(np.log(lam)) ** (-4 * tau)
                K = K_integral(KIntegralSpec(kappa, tau, 0.5 * ab, 0.5 * ab, lam))
                ratios.append(K / abs(np.log(lam + ab)) ** (1 - kappa / 2))
            C = max(ratios[0], 1 / ratios[0])  # fitted once at lam = 1e-6
            r = np.array(ratios)
            ok &= bool(np.all(r >= 1 / (2 * C)) and np.all(r <= 2 * C))
            drift = r.max() / r.min()
            ok &= drift < 2
            worst = max(worst, drift)
    return ok, f"max band drift over kappa in {{0,1/2,2/3,1}}, both cases: {worst:.3f}x"


def criterion_7():
    ok = True
    for N in (2, 5, 20):
        s = kappa_schedule(N)
        K = 2 * N + 1
        listed = [Fraction(0), Fraction(1), Fraction(1, 2), Fraction(2, 3) + Fraction(1, 12)]
        ok &= [s[K], s[K - 1], s[K - 2], s[K - 3]] == listed
        ok &= s.recursion_holds()
    err = abs(iterate_kappa(Fraction(0), 20)[-1] - Fraction(2, 3))
    ok &= err <= Fraction(1, 2**20)
    return ok, f"N in {{2,5,20}} exact; fixed-point error after 20 steps = {err}"


def criterion_8():
    M, tol = 8, 1e-11
    parts, ok = [], True
    for lam in (1e-3, 1e-5):
        vals, res = {}, 0.0
        for n in (3, 4, 5):
            r = resolvent_truncated(NestedResolventSpec(n, lam, MomentumGrid(M), tol=tol))
            vals[n] = r.value
            res = max(res, r.residual)
        holds, margins = check_interlacing(vals, tol)
        ok &= holds and min(margins) > 100 * max(tol, res) * max(vals.values())
        parts.append(f"lam={lam:g}: v3={vals[3]:.6f} v5={vals[5]:.6f} v4={vals[4]:.6f}")
    return ok, f"M={M} (M=64 needs 64^8 values at degree 5): " + "; ".join(parts)


def criterion_9():
    t0 = time.time()
    rep = verify_main_estimate_sandwich(kappa=1.0, tau=1.5, lambdas=(1e-6, 1e-9), n_functions=100)
    ok = rep.violations == 0
    up = ", ".join(f"{v:.4f}" for v in rep.upper_worst.values())
    low = ", ".join(f"{v:.3f}" for v in rep.lower_worst.values())
    return ok, (f"violations={rep.violations} upper worst ratio=({up}) lower worst ratio=({low}) "
                f"C={rep.lower_constant:.3f} drift=({rep.drift_upper:.2f}, {rep.drift_lower:.2f}) "
                f"{time.time() - t0:.0f}s")


def criterion_10():
    lams = [1e-5, 1e-6, 1e-7]
    vals = {3: [], 4: [], 5: []}
    for lam in lams:
        d = diagonal_depth_values(lam)
        for n in vals:
            vals[n].append(d[n])
    rows = drift_report(vals, lams)
    k = [r[2] for r in rows]
    ok = k[0] < k[1] < k[2]
    return ok, ("asymptotic law not reproducible at desk scale; local kappa_hat at lam=1e-6 by depth: "
                + ", ".join(f"n={r[0]}: {r[2]:.3f}" for r in rows))


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


def _check(n):
    try:
        ok, detail = CRITERIA[n]()
    except Exception as exc:  # report, then fail
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok, line


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n):
    ok, line = _check(n)
    assert ok, line


if __name__ == "__main__":
    which = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    status = [_check(n)[0] for n in which]
    sys.exit(0 if all(status) else 1)
