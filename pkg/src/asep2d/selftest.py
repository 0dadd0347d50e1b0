"""Quick built-in examples behind ``asep2d <command> --selftest``."""

import sys
from fractions import Fraction

import numpy as np


def _simulate():
    from .lattice import RngStream, sample_bernoulli, step_ctmc, Configuration

    yield "rho=0 is empty", sample_bernoulli(0.0, 8, 8, RngStream(1)).particle_count == 0
    full = sample_bernoulli(1.0, 8, 8, RngStream(1))
    yield "rho=1 is full", full.particle_count == 64
    before = full.occupancy.copy()
    step_ctmc(full, 5.0)
    yield "full lattice never changes", bool(np.array_equal(before, full.occupancy))
    dx = []
    for r in range(200):
        occ = np.zeros((4, 4), dtype=np.uint8)
        occ[0, 0] = 1
        cfg = Configuration(occ)
        step_ctmc(cfg, 10.0, RngStream(3, r))
        dx.append(cfg.Q)
    q = np.array(dx) / 10.0
    yield "free particle drifts at rate 1", abs(q.mean() - 1.0) < 4 * q.std(ddof=1) / np.sqrt(q.size)


def _oracle():
    from .oracle import build_generator, conservation_residuals, stationarity_residuals

    g = build_generator(2, 2, 1)
    yield "2x2 k=1 has 4 states", g.size == 4
    yield "2x2 row and column sums vanish", max(stationarity_residuals(g)) < 1e-14
    g3 = build_generator(3, 3, 4)
    yield "3x3 k=4 conservation law", conservation_residuals(g3)["balance"] < 1e-12


def _resolvent():
    from .fourier import DegreeNFunction, MomentumGrid, omega
    from .hierarchy import NestedResolventSpec, UVParams, apply_U, resolvent_truncated, uv_multiplier
    from .nystrom import GradedGrid

    yield "omega(0,0) = 0", omega(0.0, 0.0) == 0.0
    yield "omega(pi,pi) = 8", abs(omega(np.pi, np.pi) - 8.0) < 1e-12
    vals = [resolvent_truncated(NestedResolventSpec(3, lam, GradedGrid.for_lambda(lam))).value
            for lam in (1e-2, 1e-4)]
    yield "n=3 value grows as lambda drops", vals[1] > vals[0]
    p = UVParams(1.0, 1.5, 1e-6)
    grid = MomentumGrid(4)
    zero = DegreeNFunction(2, grid)
    yield "U F=0 is 0", not np.any(apply_U(p, zero).values)
    th = p.threshold
    lo = uv_multiplier(p, 1.0, th * (1 - 1e-12), "U")
    hi = uv_multiplier(p, 1.0, th * (1 + 1e-12), "U")
    yield "U continuous at kappa=1", abs(lo - hi) < 1e-9


def _kintegral():
    from .kintegral import K_closed_form_kappa0, K_integral, KIntegralSpec

    for lam in (1e-6, 1e-12):
        num = K_integral(KIntegralSpec(0.0, 1.5, 0.0, 0.0, lam))
        yield f"kappa=0 closed form at {lam:g}", abs(num / K_closed_form_kappa0(lam, 1.5) - 1) < 1e-8


def _kappa():
    from .scaling import iterate_kappa, kappa_schedule

    s = kappa_schedule(2)
    yield "N=2 values, kappa_5 down to kappa_1", list(s.values)[::-1] == [Fraction(0), Fraction(1), Fraction(1, 2), Fraction(3, 4), Fraction(5, 8)]
    yield "recursion holds", s.recursion_holds()
    it = iterate_kappa(Fraction(0), 20)
    yield "fixed point within 2^-20", abs(it[-1] - Fraction(2, 3)) <= Fraction(1, 2**20)


def _fit():
    from .scaling import fit_log_power

    lam = np.logspace(-3, -9, 13)
    fit = fit_log_power(lam, np.abs(np.log(lam)) ** (2 / 3))
    yield "synthetic 2/3 recovered", abs(fit.kappa - 2 / 3) < 0.01


SUITES = {"simulate": _simulate, "oracle": _oracle, "resolvent": _resolvent,
          "kintegral": _kintegral, "kappa": _kappa, "fit": _fit}


def run_selftest(command, stream=None):
    stream = stream or sys.stdout
    ok = True
    for name, passed in SUITES[command]():
        print(f"{'PASS' if passed else 'FAIL'}  {command}: {name}", file=stream)
        ok &= bool(passed)
    return ok
