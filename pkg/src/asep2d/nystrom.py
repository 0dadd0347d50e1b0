"""Degree-three resolvent on graded momentum quadratures.

The degree-two block of the nested resolvent is

    B f(q) = (lam + 2 omega(q)) f(q) + c(q) f(q) + 2 int dp k(q, p) f(p)

where, with p_3 = -q - p and D = 1 / (lam + omega(q) + omega(p) + omega(p_3)
+ Omega(q, p, p_3)),

    c(q)    = int dp D (sin r_p + sin r_3)^2
    k(q, p) = D (sin r_p + sin r_3)(sin r_q + sin r_3).

This is A_+^* D A_+ written as a multiplication plus an integral operator on
the free momentum, so the quadrature nodes never have to be closed under
addition.  Nodes are composite Gauss-Legendre on dyadic panels accumulating
at zero, which resolves the sqrt(lam) scale at a cost growing like |log lam|.

Solutions inherit the reflection symmetries r -> -r and s -> -s, so
unknowns are stored on the positive quadrant and each parity sector
(even, even) or (odd, odd) is solved separately.
"""

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import NumericalError, ParameterError
from .fourier import MEASURES

MODE_CODES = {None: 0, "none": 0, "U": 1, "V": 2}


@dataclass(frozen=True)
class GradedGrid:
    """Tensor Gauss grid on the positive quadrant, mirrored by symmetry.

    ``order`` Gauss points per panel; panels halve in width from pi down to
    ``floor``, then one panel covers [0, floor].  ``resolution`` counts nodes
    per full axis and plays the role of M for uniform grids.
    """

    floor: float
    order: int = 3
    panels_per_octave: int = 1
    measure: str = "lebesgue"

    def __post_init__(self):
        if not 0 < self.floor < np.pi:
            raise ParameterError(f"floor must be in (0, pi), got {self.floor}")
        if self.order < 1 or self.panels_per_octave < 1:
            raise ParameterError("order and panels_per_octave must be >= 1")
        if self.measure not in MEASURES:
            raise ParameterError(f"unknown measure {self.measure!r}")

    @classmethod
    def for_lambda(cls, lam, order=3, panels_per_octave=1, measure="lebesgue", depth=0.05):
        return cls(depth * np.sqrt(lam), order, panels_per_octave, measure)

    def refined(self):
        return GradedGrid(self.floor, 2 * self.order, self.panels_per_octave, self.measure)

    def axis(self):
        octaves = int(np.ceil(np.log2(np.pi / self.floor)))
        count = octaves * self.panels_per_octave
        edges = np.pi * 2.0 ** (-np.arange(count + 1) / self.panels_per_octave)
        edges = np.append(edges, 0.0)[::-1]
        x, w = np.polynomial.legendre.leggauss(self.order)
        lo, hi = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
        weights = (0.5 * (hi - lo) * w).ravel()
        return nodes, weights

    @property
    def resolution(self):
        return 2 * self.axis()[0].size

    def quadrant(self):
        """Nodes (r, s) on the positive quadrant and full-torus weights.

        Weights include the factor 4 for the mirrored copies and the measure
        normalization, so sum(weights * g) integrates an even-even g.
        """
        x, w = self.axis()
        R, S = np.meshgrid(x, x, indexing="ij")
        W = 4.0 * np.outer(w, w) * MEASURES[self.measure]
        return R, S, W


@dataclass(frozen=True)
class UniformNodes:
    """Uniform M x M torus grid used as a plain quadrature (no folding)."""

    M: int
    measure: str = "lebesgue"

    @property
    def resolution(self):
        return self.M

    def quadrant(self):
        ax = 2.0 * np.pi * np.arange(self.M) / self.M
        ax = (ax + np.pi) % (2.0 * np.pi) - np.pi
        R, S = np.meshgrid(ax, ax, indexing="ij")
        W = np.full(R.shape, (2.0 * np.pi / self.M) ** 2 * MEASURES[self.measure])
        return R, S, W


@dataclass(frozen=True)
class Multiplier:
    """Diagonal degree-three term Omega added to lam - S, for U/V substitution.

    ``mode`` is None, "U" or "V"; the multiplier is ``coef`` times U or V with
    exponent ``kappa`` and good-set threshold |log lam|^(-2 tau).
    """

    mode: object = None
    kappa: float = 1.0
    tau: float = 1.5
    coef: float = 0.0

    def code(self):
        return MODE_CODES[self.mode]


@nb.njit(cache=True, inline="always")
def _uv(code, lam, a, tot, kappa, thresh, loglog2):
    if code == 0:
        return 0.0
    lg = abs(np.log(lam + tot))
    if tot <= thresh:
        return a * (1.0 + lg**kappa)
    if code == 1:
        return a * (1.0 + lg)
    return -loglog2 * a


@nb.njit(cache=True)
def _axis_tables(x, nsign, par):
    """Per-axis pieces of the degree-three denominator and pair weights.

    For query node i, integration node a and reflection sign sa:
    om[i, a, sa] is the axis part of omega(q) + omega(p) + omega(-q - p),
    s1 = sin r_p + sin r_3 (vanishes on the s axis), s2 = sin r_q + sin r_3,
    pf the parity factor of the reflected copy.
    """
    N = x.shape[0]
    h = np.sin(0.5 * x)
    c = np.cos(0.5 * x)
    om = np.empty((N, N, nsign))
    s1 = np.empty((N, N, nsign))
    s2 = np.empty((N, N, nsign))
    pf = np.empty(nsign)
    for sa in range(nsign):
        sg = 1.0 if sa == 0 else -1.0
        pf[sa] = 1.0 if sa == 0 else par
        for i in range(N):
            for a in range(N):
                hr = sg * h[a]
                r = sg * x[a]
                h3 = h[i] * c[a] + c[i] * hr
                om[i, a, sa] = 4.0 * (h[i] * h[i] + hr * hr + h3 * h3)
                # sin r_p + sin r_3 = sin r - sin(q + r) = -2 cos(r + q/2) sin(q/2)
                s1[i, a, sa] = -2.0 * np.cos(r + 0.5 * x[i]) * h[i]
                s2[i, a, sa] = -2.0 * np.cos(x[i] + 0.5 * r) * hr
    return om, s1, s2, pf


@nb.njit(cache=True)
def _diag_c(lam, om_r, s1_r, om_s, pw, code, kappa, thresh, loglog2, coef):
    Nr = om_r.shape[0]
    Ns = om_s.shape[0]
    nsr = om_r.shape[2]
    nss = om_s.shape[2]
    out = np.zeros(Nr * Ns)
    for ir in range(Nr):
        for is_ in range(Ns):
            acc = 0.0
            for ar in range(Nr):
                for sa in range(nsr):
                    A = om_r[ir, ar, sa]
                    w1 = s1_r[ir, ar, sa] ** 2
                    inner = 0.0
                    for as_ in range(Ns):
                        pwa = pw[ar * Ns + as_]
                        for sb in range(nss):
                            tot = A + om_s[is_, as_, sb]
                            d = lam + tot + coef * _uv(code, lam, A, tot, kappa, thresh, loglog2)
                            inner += pwa / d
                    acc += w1 * inner
            out[ir * Ns + is_] = acc
    return out


@nb.njit(cache=True)
def _apply_off(lam, om_r, s1_r, s2_r, pf_r, om_s, pf_s, pw, f, code, kappa, thresh, loglog2, coef):
    """2 int dp k(q, p) f(p) for each column of f (shape (n, m))."""
    Nr = om_r.shape[0]
    Ns = om_s.shape[0]
    nsr = om_r.shape[2]
    nss = om_s.shape[2]
    m = f.shape[1]
    out = np.zeros((Nr * Ns, m))
    acc = np.empty(m)
    for ir in range(Nr):
        for is_ in range(Ns):
            acc[:] = 0.0
            for ar in range(Nr):
                for as_ in range(Ns):
                    kern = 0.0
                    for sa in range(nsr):
                        A = om_r[ir, ar, sa]
                        g = pf_r[sa] * s1_r[ir, ar, sa] * s2_r[ir, ar, sa]
                        inner = 0.0
                        for sb in range(nss):
                            tot = A + om_s[is_, as_, sb]
                            d = lam + tot + coef * _uv(code, lam, A, tot, kappa, thresh, loglog2)
                            inner += pf_s[sb] / d
                        kern += g * inner
                    a = ar * Ns + as_
                    kern *= pw[a]
                    for j in range(m):
                        acc[j] += kern * f[a, j]
            i = ir * Ns + is_
            for j in range(m):
                out[i, j] = 2.0 * acc[j]
    return out


def _uv_args(lam, mult, tau_scale=1.0):
    L = abs(np.log(lam))
    thresh = L ** (-2.0 * mult.tau * tau_scale)
    loglog2 = np.log(L) ** 2
    return mult.code(), float(mult.kappa), float(thresh), float(loglog2), float(mult.coef)


class DegreeTwoBlock:
    """The operator lam - S + A_+^*(lam - S + Omega)^{-1} A_+ on degree two.

    Acts on values tabulated on ``grid.quadrant()``; ``parity`` selects the
    (even, even) sector (+1, +1) or the (odd, odd) sector (-1, -1).
    """

    def __init__(self, lam, grid, multiplier=None, parity=(1.0, 1.0), coupling=1.0):
        if lam <= 0:
            raise ParameterError(f"lambda must be positive, got {lam}")
        self.lam = float(lam)
        self.grid = grid
        self.multiplier = multiplier or Multiplier()
        self.parity = (float(parity[0]), float(parity[1]))
        self.coupling = float(coupling)
        R, S, W = grid.quadrant()
        self.shape = R.shape
        self.r = R.ravel()
        self.s = S.ravel()
        self.w = W.ravel()
        fold = isinstance(grid, GradedGrid)
        self.nsign = 2 if fold else 1
        # weights for the p-sum: one mirrored copy per sign pattern
        self.pw = self.w / (4.0 if fold else 1.0)
        self.omega2 = 2.0 * (4.0 * np.sin(0.5 * self.r) ** 2 + 4.0 * np.sin(0.5 * self.s) ** 2)
        self._uv = _uv_args(self.lam, self.multiplier)
        xr, xs = R[:, 0].copy(), S[0, :].copy()
        self._rt = _axis_tables(xr, self.nsign, self.parity[0])
        om_s, _, _, pf_s = _axis_tables(xs, self.nsign, self.parity[1])
        self._st = (om_s, pf_s)
        self.c = self.coupling * _diag_c(self.lam, self._rt[0], self._rt[1], om_s, self.pw, *self._uv)

    @property
    def size(self):
        return self.r.size

    def apply_T(self, f):
        """A_+^* (lam - S + Omega)^{-1} A_+ applied to tabulated f.

        ``f`` may be one vector or a matrix with one function per column.
        """
        f = np.asarray(f, dtype=float)
        cols = np.ascontiguousarray(f.reshape(self.size, -1))
        om_r, s1_r, s2_r, pf_r = self._rt
        om_s, pf_s = self._st
        off = _apply_off(
            self.lam, om_r, s1_r, s2_r, pf_r, om_s, pf_s, self.pw, cols, *self._uv
        ).reshape(f.shape)
        c = self.c if f.ndim == 1 else self.c[:, None]
        return c * f + self.coupling * off

    def apply(self, f):
        return (self.lam + self.omega2) * f + self.apply_T(f)

    def form(self, f, g):
        """<f, g> = 1/2 int dq f g on the degree-two slice (columnwise for matrices)."""
        if np.ndim(f) == 1:
            return 0.5 * float(np.sum(self.w * f * g))
        return 0.5 * np.sum(self.w[:, None] * f * g, axis=0)

    def solve(self, rhs, tol=1e-10, maxiter=500):
        """Solve B u = rhs by preconditioned CG in weight-symmetrized variables."""
        sq = np.sqrt(self.w)
        n = self.size
        op = LinearOperator((n, n), matvec=lambda x: sq * self.apply(x / sq))
        diag = self.lam + self.omega2 + self.c
        pre = LinearOperator((n, n), matvec=lambda x: x / diag)
        b = sq * rhs
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = cg(op, b, rtol=tol, atol=0.0, maxiter=maxiter, M=pre, callback=cb)
        u = x / sq
        res = float(np.linalg.norm(op.matvec(x) - b) / max(np.linalg.norm(b), 1e-300))
        if info != 0:
            raise NumericalError(f"CG did not converge after {maxiter} iterations", res)
        return u, res, count[0]


def current_even(grid):
    """Symmetrized current cos(r) on the quadrant (even-even sector)."""
    R, _, _ = grid.quadrant()
    return np.cos(R).ravel()


def degree_three_value(lam, grid, multiplier=None, tol=1e-10, maxiter=500, coupling=1.0):
    """<w, [lam - S + A_+^*(lam - S + Omega)^{-1} A_+]^{-1} w> with w = cos r."""
    block = DegreeTwoBlock(lam, grid, multiplier, coupling=coupling)
    w = current_even(grid)
    u, res, its = block.solve(w, tol=tol, maxiter=maxiter)
    return block.form(w, u), res, its


def degree_two_diagonal_value(lam, grid, extra, weight=None):
    """1/2 int dq weight(q) / (lam + 2 omega(q) + extra(q)), extra tabulated."""
    R, S, W = grid.quadrant()
    om2 = 2.0 * (4.0 * np.sin(0.5 * R) ** 2 + 4.0 * np.sin(0.5 * S) ** 2)
    num = np.ones_like(R) if weight is None else weight
    return 0.5 * float(np.sum(W * num / (lam + om2 + extra)))
