"""Estimators built on simulated trajectories.

Conventions
-----------
chi = rho (1 - rho).  Diffusivities follow D = variance / (2 t), so that the
free symmetric walk of rate 1/2 per direction has D = 1/2 and

    int_0^inf e^{-lam t} t D(t) dt = 1/(2 lam^2) + <<w, (lam - L)^{-1} w>> / (chi lam^2)

holds exactly when D(t) = 1/2 + Var[J(t)] / (2 chi V t).
"""

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .lattice import DEFAULT_RATES, RngStream, run_trajectory, sample_bernoulli, sample_canonical

THREADS_ENV = "ASEP2D_THREADS"


def canonical_w_mean(V, k, rho):
    """E[(eta_x - rho)(eta_{x+e1} - rho)] in the k-particle ensemble on V sites."""
    p1 = k / V
    p2 = k * (k - 1) / (V * (V - 1))
    return p2 - 2.0 * rho * p1 + rho * rho


def canonical_right_rate(V, k):
    """E[eta_x (1 - eta_{x+e1})] in the k-particle ensemble."""
    return k / V - k * (k - 1) / (V * (V - 1))


# -- replica ensemble -------------------------------------------------------------


@dataclass
class EnsembleRun:
    """Per-replica records of an equilibrium ensemble.

    ``corr_blocks`` holds block sums of the translation-averaged products
    (eta_{y+x}(t) - rho)(eta_y(0) - rho) / V, with shape
    (n_blocks, n_t, Lx, Ly); ``block_sizes`` the replica count per block.
    """

    Lx: int
    Ly: int
    rho: float
    t_grid: np.ndarray
    J: np.ndarray  # (R, n_t), centered per replica by its canonical mean
    Q: np.ndarray  # (R, n_t), centered likewise
    counts: np.ndarray  # particle numbers
    corr_blocks: np.ndarray = None
    block_sizes: np.ndarray = None
    rates: tuple = DEFAULT_RATES

    @property
    def V(self):
        return self.Lx * self.Ly

    @property
    def replicas(self):
        return self.J.shape[0]

    @property
    def chi(self):
        return self.rho * (1.0 - self.rho)


def _replica(args):
    Lx, Ly, rho, t_grid, seed, rid, canonical, rates, want_corr = args
    stream = RngStream(seed, rid)
    if canonical:
        cfg = sample_canonical(int(round(rho * Lx * Ly)), Lx, Ly, stream)
    else:
        cfg = sample_bernoulli(rho, Lx, Ly, stream)
    cfg.rho_w = rho
    d0 = cfg.occupancy.astype(float) - rho
    tr = run_trajectory(cfg, t_grid, rates=rates, keep_snapshots=want_corr)
    corr = None
    if want_corr:
        f0 = np.conj(np.fft.fft2(d0))
        dt = tr.snapshots.astype(float) - rho
        corr = np.fft.ifft2(np.fft.fft2(dt, axes=(1, 2)) * f0[None], axes=(1, 2)).real / (Lx * Ly)
    return tr.J, tr.Q, tr.particle_count, corr


def run_ensemble(Lx, Ly, rho, t_grid, replicas, seed=0, canonical=False, rates=DEFAULT_RATES,
                 correlations=True, n_blocks=20, workers=None):
    """Simulate independent equilibrium replicas and collect observables.

    Replica r uses the stream (seed, r), so results do not depend on the
    worker count.  ``workers`` defaults to the ASEP2D_THREADS environment
    variable, else 1.
    """
    if replicas < 2:
        raise ParameterError("need at least two replicas for error estimates")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        t_grid = np.concatenate([[0.0], t_grid])
    workers = workers or int(os.environ.get(THREADS_ENV, "1"))
    n_blocks = max(2, min(n_blocks, replicas))
    block_of = np.arange(replicas) * n_blocks // replicas
    V = Lx * Ly
    J = np.empty((replicas, t_grid.size))
    Q = np.empty((replicas, t_grid.size))
    counts = np.empty(replicas, dtype=np.int64)
    corr = np.zeros((n_blocks, t_grid.size, Lx, Ly)) if correlations else None
    tasks = ((Lx, Ly, rho, t_grid, seed, r, canonical, tuple(rates), correlations) for r in range(replicas))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = pool.map(_replica, tasks, chunksize=8)
            _collect(results, J, Q, counts, corr, block_of)
    else:
        _collect(map(_replica, tasks), J, Q, counts, corr, block_of)
    # remove the conditional means given the particle number, known exactly
    wbar = np.array([canonical_w_mean(V, k, rho) for k in counts]) * V
    rbar = np.array([canonical_right_rate(V, k) for k in counts]) * V * rates[0]
    J -= wbar[:, None] * t_grid[None, :]
    Q -= rbar[:, None] * t_grid[None, :]
    sizes = np.bincount(block_of, minlength=n_blocks) if correlations else None
    return EnsembleRun(Lx, Ly, rho, t_grid, J, Q, counts, corr, sizes, tuple(rates))


def _collect(results, J, Q, counts, corr, block_of):
    for r, (j, q, k, c) in enumerate(results):
        J[r], Q[r], counts[r] = j, q, k
        if corr is not None:
            corr[block_of[r]] += c


# -- jackknife ----------------------------------------------------------------------


def jackknife(blocks, weights, stat):
    """Delete-one-block jackknife of ``stat`` applied to weighted block means.

    ``blocks`` has the block index first; ``stat`` maps a mean array to an
    array of estimates.  Returns (estimate, standard error).
    """
    blocks = np.asarray(blocks, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = blocks.sum(axis=0)
    full = stat(total / w.sum())
    nb = blocks.shape[0]
    loo = np.array([stat((total - blocks[b]) / (w.sum() - w[b])) for b in range(nb)])
    err = np.sqrt((nb - 1) / nb * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, err


def _replica_blocks(x, n_blocks):
    """Block sums of per-replica rows plus block sizes."""
    R = x.shape[0]
    n_blocks = max(2, min(n_blocks, R))
    idx = np.arange(R) * n_blocks // R
    sums = np.zeros((n_blocks,) + x.shape[1:])
    np.add.at(sums, idx, x)
    return sums, np.bincount(idx, minlength=n_blocks).astype(float)


# -- structure function ---------------------------------------------------------------


@dataclass
class CorrelationField:
    """Estimate of S(x, t) = <eta_x(t); eta_0(0)> with block-jackknife errors."""

    Lx: int
    Ly: int
    rho: float
    t_grid: np.ndarray
    values: np.ndarray  # (n_t, Lx, Ly)
    errors: np.ndarray
    replica_count: int
    blocks: np.ndarray = field(repr=False, default=None)
    block_sizes: np.ndarray = field(repr=False, default=None)

    @property
    def chi(self):
        return self.rho * (1.0 - self.rho)

    def displacements(self):
        """Minimal-image coordinates (x1, x2) matching the array layout."""
        x1 = np.fft.fftfreq(self.Lx, 1.0 / self.Lx)
        x2 = np.fft.fftfreq(self.Ly, 1.0 / self.Ly)
        if self.Lx % 2 == 0:
            x1[self.Lx // 2] = self.Lx // 2  # ambiguous antipode, counted once
        if self.Ly % 2 == 0:
            x2[self.Ly // 2] = self.Ly // 2
        return np.meshgrid(x1, x2, indexing="ij")

    def moment(self, f):
        """sum_x f(x) S(x, t) per time, with jackknife error."""
        X1, X2 = self.displacements()
        weight = f(X1, X2)
        return jackknife(self.blocks, self.block_sizes, lambda m: np.sum(m * weight, axis=(1, 2)))

    def total(self):
        return self.moment(lambda a, b: np.ones_like(a))

    def first_moment(self, axis=1):
        return self.moment(lambda a, b: a if axis == 1 else b)

    def mass_within(self, radius):
        """Fraction of sum_x |S(x,t)| inside the box |x_i| <= radius, per time."""
        X1, X2 = self.displacements()
        inside = (np.abs(X1) <= radius) & (np.abs(X2) <= radius)
        a = np.abs(self.values)
        return np.sum(a * inside, axis=(1, 2)) / np.maximum(np.sum(a, axis=(1, 2)), 1e-300)


def measure_structure_function(run, t_grid=None):
    """Structure function from an :class:`EnsembleRun` with correlations kept."""
    if run.corr_blocks is None:
        raise ParameterError("ensemble was run without correlations")
    if run.replicas < 2:
        raise ParameterError("need at least two replicas")
    blocks, sizes = run.corr_blocks, run.block_sizes.astype(float)
    if t_grid is not None:
        sel = np.searchsorted(run.t_grid, t_grid)
        blocks = blocks[:, sel]
        times = run.t_grid[sel]
    else:
        times = run.t_grid
    val, err = jackknife(blocks, sizes, lambda m: m)
    return CorrelationField(run.Lx, run.Ly, run.rho, times, val, err, run.replicas, blocks, sizes)


# -- diffusivity --------------------------------------------------------------------


@dataclass
class DiffusivityCurve:
    t_grid: np.ndarray
    D11: np.ndarray
    D11_err: np.ndarray
    D11_gk: np.ndarray = None
    D11_gk_err: np.ndarray = None
    velocity: np.ndarray = None
    velocity_err: np.ndarray = None
    flags: list = field(default_factory=list)
    chi: float = 0.25


def velocity_from_correlations(corr, window=None):
    """v1(t) = sum_x x1 S(x, t) / (chi t) for t > 0, with jackknife error."""
    t = corr.t_grid
    keep = t > 0
    X1, X2 = corr.displacements()
    box = np.ones_like(X1)
    if window is not None:
        box = ((np.abs(X1) <= window * corr.Lx) & (np.abs(X2) <= window * corr.Ly)).astype(float)

    def stat(m):
        return np.sum(m[keep] * X1 * box, axis=(1, 2)) / (corr.chi * t[keep])

    v, e = jackknife(corr.blocks, corr.block_sizes, stat)
    return t[keep], v, e


def diffusivity_from_moments(corr, axis=1, window=0.25, control_variate=True, wrap_fraction=0.99):
    """D_ii(t) = (1/2t) [sum_x x_i^2 S(x,t) / chi - (v_i t)^2], t > 0 only.

    Parameters
    ----------
    corr : CorrelationField
        Must contain t = 0 when ``control_variate`` is set.
    window : float or None
        Restrict moment sums to the box |x_j| <= window * L_j (minimal image).
        Outside it S carries only noise, which x^2 would amplify.
    control_variate : bool
        Use S(x,t) - S_hat(x,0) + chi delta_x0; the t = 0 field has known mean
        and its noise is correlated with that at small t.
    wrap_fraction : float
        Flag (and warn) when a Gaussian with the measured spread and drift has
        less than this fraction of its mass inside the L/4 box.
    """
    if corr.chi <= 0:
        raise ParameterError("compressibility must be positive")
    t = corr.t_grid
    keep = t > 0
    X1, X2 = corr.displacements()
    X = X1 if axis == 1 else X2
    box = np.ones_like(X1, dtype=bool)
    if window is not None:
        box = (np.abs(X1) <= window * corr.Lx) & (np.abs(X2) <= window * corr.Ly)
    has0 = t[0] == 0
    if control_variate and not has0:
        raise ParameterError("control variate needs the t = 0 field")
    delta = np.zeros_like(X1)
    delta[0, 0] = corr.chi

    def fields(m):
        if control_variate:
            return m[keep] - m[0][None] + delta[None]
        return m[keep]

    def stat(m):
        f = fields(m) * box
        first = np.sum(f * X, axis=(1, 2)) / corr.chi
        second = np.sum(f * X * X, axis=(1, 2)) / corr.chi
        return (second - first**2) / (2.0 * t[keep])

    def vstat(m):
        return np.sum(fields(m) * box * X1, axis=(1, 2)) / (corr.chi * t[keep])

    D, err = jackknife(corr.blocks, corr.block_sizes, stat)
    v, v_err = jackknife(corr.blocks, corr.block_sizes, vstat)
    flags = []
    frac = gaussian_mass_within(corr, np.maximum(D, 0.0), v, t[keep], axis)
    if np.any(frac < wrap_fraction):
        flags.append("wrap-around")
        warnings.warn(f"estimated mass within L/4 drops to {frac.min():.4f}; moments biased by wrap-around")
    return DiffusivityCurve(t[keep], D, err, velocity=v, velocity_err=v_err, flags=flags, chi=corr.chi)


def gaussian_mass_within(corr, D, v, t, axis=1):
    """Mass of N(v t, 2 D t) inside |x| <= L/4 along ``axis`` (spread check)."""
    from scipy.special import erf

    half = (corr.Lx if axis == 1 else corr.Ly) / 4.0
    sd = np.sqrt(np.maximum(2.0 * D * t, 1e-300))
    shift = np.abs(v * t) if axis == 1 else 0.0
    return 0.5 * (erf((half - shift) / (np.sqrt(2) * sd)) + erf((half + shift) / (np.sqrt(2) * sd)))


def diffusivity_green_kubo(run, n_blocks=20):
    """D11(t) = 1/2 + Var[J(t)] / (2 chi V t) from the degree-two current integrals."""
    t = run.t_grid
    keep = t > 0
    J = run.J[:, keep]
    sums, sizes = _replica_blocks(np.concatenate([J, J**2], axis=1), n_blocks)
    n = J.shape[1]
    R = run.replicas

    def stat(m):
        mean, sq = m[:n], m[n:]
        var = (sq - mean**2) * R / (R - 1)
        return 0.5 + var / (2.0 * run.chi * run.V * t[keep])

    D, err = jackknife(sums, sizes, stat)
    return DiffusivityCurve(t[keep], D11=D, D11_err=err, D11_gk=D, D11_gk_err=err, chi=run.chi)


def diffusivity_from_counts(run, n_blocks=20):
    """D11(t) = Var[Q(t)] / (2 chi V t) from the number of right jumps.

    Since Q(t) - (chi V t - J(t)) is a martingale with quadratic variation Q,
    this equals 1/2 + Var[J]/(2 chi V t) up to the exact covariance terms; the
    two are compared in the tests.
    """
    t = run.t_grid
    keep = t > 0
    Q = run.Q[:, keep]
    sums, sizes = _replica_blocks(np.concatenate([Q, Q**2], axis=1), n_blocks)
    n = Q.shape[1]
    R = run.replicas

    def stat(m):
        return (m[n:] - m[:n] ** 2) * R / (R - 1) / (2.0 * run.chi * run.V * t[keep])

    D, err = jackknife(sums, sizes, stat)
    return DiffusivityCurve(t[keep], D, err, chi=run.chi)


def current_variance(run, n_blocks=20):
    """Var[J(t)] per time with jackknife errors (t = 0 included)."""
    sums, sizes = _replica_blocks(np.concatenate([run.J, run.J**2], axis=1), n_blocks)
    n = run.J.shape[1]
    R = run.replicas
    return jackknife(sums, sizes, lambda m: (m[n:] - m[:n] ** 2) * R / (R - 1))


# -- Laplace transform ----------------------------------------------------------------


@dataclass
class LaplaceResult:
    lam: float
    value: float
    error: float
    tail_fraction: float
    identity_rhs: float = float("nan")

    @property
    def identity_residual(self):
        return self.value - self.identity_rhs


def _laplace_of_samples(t, y, lam, tail_points):
    """int_0^inf e^{-lam t} y(t) dt: Simpson-free trapezoid plus a linear tail fit."""
    core = np.trapezoid(np.exp(-lam * t) * y, t)
    T = t[-1]
    tt, yy = t[-tail_points:], y[-tail_points:]
    b, a = np.polyfit(tt - T, yy, 1)
    # int_T^inf e^{-lam s} (a + b (s - T)) ds
    tail = np.exp(-lam * T) * (a / lam + b / lam**2)
    return core + tail, tail


def laplace_transform_D(curve_or_run, lam, oracle_value=None, tail_points=20, n_blocks=20):
    """int_0^inf e^{-lam t} t D11(t) dt.

    Accepts an :class:`EnsembleRun` (Green-Kubo route, with jackknife error
    over replica blocks) or a :class:`DiffusivityCurve` (no error).  When the
    oracle value <<w, (lam - L)^{-1} w>> is supplied, the right side
    1/(2 lam^2) + value / (chi lam^2) is attached for comparison.
    """
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    if isinstance(curve_or_run, EnsembleRun):
        run = curve_or_run
        t = run.t_grid
        chi, V = run.chi, run.V
        if lam * t[-1] < 5:
            warnings.warn(f"lambda * t_max = {lam * t[-1]:.2f} < 5; truncation error may dominate")
        sums, sizes = _replica_blocks(np.concatenate([run.J, run.J**2], axis=1), n_blocks)
        n = t.size
        R = run.replicas
        tails = []

        def stat(m):
            var = (m[n:] - m[:n] ** 2) * R / (R - 1)
            val, tail = _laplace_of_samples(t, var / (2.0 * chi * V), lam, tail_points)
            tails.append(tail)
            return np.array([0.5 / lam**2 + val])

        val, err = jackknife(sums, sizes, stat)
        value, error = float(val[0]), float(err[0])
        tail_frac = abs(tails[0]) / value
    else:
        curve = curve_or_run
        chi = curve.chi
        t = np.concatenate([[0.0], curve.t_grid])
        y = np.concatenate([[0.0], curve.t_grid * curve.D11])
        if lam * t[-1] < 5:
            warnings.warn(f"lambda * t_max = {lam * t[-1]:.2f} < 5; truncation error may dominate")
        value, tail = _laplace_of_samples(t, y, lam, tail_points)
        error, tail_frac = 0.0, abs(tail) / abs(value)
    res = LaplaceResult(lam, value, error, tail_frac)
    if oracle_value is not None:
        res.identity_rhs = 0.5 / lam**2 + oracle_value / (chi * lam**2)
    return res


def mean_right_current(run):
    """Mean accepted right jumps per site per unit time, with standard error."""
    t = run.t_grid[-1]
    V = run.V
    k = run.counts
    raw = run.Q[:, -1] + np.array([canonical_right_rate(V, kk) for kk in k]) * V * run.rates[0] * t
    per = raw / (V * t)
    return float(per.mean()), float(per.std(ddof=1) / np.sqrt(per.size))
