"""Momentum-space representation of the hard-core-free duality hierarchy.

A degree-n function is a symmetric function F(p_1, ..., p_n) of n momenta
p_j = (r_j, s_j) in [-pi, pi)^2, needed only on the slice sum_j p_j = 0.  On a
uniform grid the last momentum is never stored: values live on the n-1 free
momenta and p_n = -(p_1 + ... + p_{n-1}).

Measure convention.  ``measure="lebesgue"`` integrates every momentum with
d^2p over [-pi, pi)^2 (grid weight (2 pi / M)^2); this is the convention of
the nested resolvent formulas and of the K integral.  ``measure="lattice"``
uses d^2p / (2 pi)^2, under which the degree-n pairing equals the
translation-summed lattice covariance of the real-space coefficients
exactly.  The two differ by (2 pi)^(2(n-1)) in the pairing and by (2 pi)^2 in
the strength of A_+^* R A_+ relative to the Laplacian.
"""

from dataclasses import dataclass
from itertools import permutations
from math import factorial

import numpy as np

from .errors import CapacityError, ParameterError

MAX_DEGREE = 5
MAX_VALUES = 60_000_000

MEASURES = {"lebesgue": 1.0, "lattice": 1.0 / (4.0 * np.pi**2)}


def reduce_angle(x):
    """Map angles to [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi


def omega_r(r):
    """One-axis dispersion 2 - 2 cos r, evaluated as 4 sin^2(r/2)."""
    return 4.0 * np.sin(0.5 * np.asarray(r)) ** 2


def omega(r, s=None):
    """Dispersion of the discrete Laplacian, (2 - 2 cos r) + (2 - 2 cos s).

    Accepts a :class:`MomentumPoint`, or the two components separately.
    """
    if s is None:
        r, s = r.r, r.s
    return omega_r(r) + omega_r(s)


@dataclass(frozen=True)
class MomentumPoint:
    r: float
    s: float

    def __post_init__(self):
        object.__setattr__(self, "r", float(reduce_angle(self.r)))
        object.__setattr__(self, "s", float(reduce_angle(self.s)))

    def __add__(self, other):
        return MomentumPoint(self.r + other.r, self.s + other.s)

    def __neg__(self):
        return MomentumPoint(-self.r, -self.s)

    def __sub__(self, other):
        return self + (-other)


class MomentumGrid:
    """Uniform M x M grid on the momentum torus.

    Points are addressed by a flat index k = i_r * M + i_s with angles
    2 pi i / M reduced to [-pi, pi).  The grid is closed under addition and
    negation, so merged momenta p_j + p_m are grid points again.
    """

    def __init__(self, M, measure="lebesgue"):
        if M < 2 or M % 2:
            raise ParameterError(f"grid size M must be even and >= 2, got {M}")
        if measure not in MEASURES:
            raise ParameterError(f"unknown measure {measure!r}")
        self.M = int(M)
        self.measure = measure
        self.spacing = 2.0 * np.pi / self.M
        self.weight = self.spacing**2 * MEASURES[measure]
        self.axis = reduce_angle(self.spacing * np.arange(self.M))
        k = np.arange(self.size)
        self.r = self.axis[k // self.M]
        self.s = self.axis[k % self.M]

    @property
    def size(self):
        return self.M * self.M

    def __eq__(self, other):
        return (
            isinstance(other, MomentumGrid)
            and self.M == other.M
            and self.measure == other.measure
        )

    def __hash__(self):
        return hash((self.M, self.measure))

    def __repr__(self):
        return f"MomentumGrid(M={self.M}, measure={self.measure!r})"

    def index(self, p):
        """Flat index of the grid point nearest to ``p``."""
        ir = int(np.rint(p.r / self.spacing)) % self.M
        i_s = int(np.rint(p.s / self.spacing)) % self.M
        return ir * self.M + i_s

    def point(self, k):
        return MomentumPoint(self.r[k], self.s[k])

    def add(self, k1, k2):
        M = self.M
        return ((k1 // M + k2 // M) % M) * M + (k1 % M + k2 % M) % M

    def neg(self, k):
        M = self.M
        return ((-(k // M)) % M) * M + (-(k % M)) % M

    def omega(self):
        return omega(self.r, self.s)


def _slot_indices(n, grid):
    """Broadcastable flat indices of all n momenta on the slice, free first."""
    if n == 1:
        return [np.zeros((), dtype=np.int64)]
    free = []
    for j in range(n - 1):
        shape = [1] * (n - 1)
        shape[j] = grid.size
        free.append(np.arange(grid.size).reshape(shape))
    total = free[0]
    for k in free[1:]:
        total = grid.add(total, k)
    return free + [grid.neg(total)]


def _check_size(n, grid):
    if n < 1:
        raise ParameterError(f"degree must be positive, got {n}")
    if n > MAX_DEGREE:
        raise CapacityError(f"degree {n} exceeds the cap {MAX_DEGREE}")
    count = grid.size ** (n - 1)
    if count > MAX_VALUES:
        raise CapacityError(
            f"degree-{n} function on M={grid.M} needs {count} values "
            f"(cap {MAX_VALUES})"
        )


class DegreeNFunction:
    """Values of a degree-n function on the free momenta of the slice."""

    def __init__(self, n, grid, values=None, symmetric=False):
        _check_size(n, grid)
        self.n = int(n)
        self.grid = grid
        shape = (grid.size,) * (self.n - 1)
        if values is None:
            values = np.zeros(shape, dtype=complex)
        values = np.asarray(values, dtype=complex)
        if values.shape != shape:
            raise ParameterError(f"values shape {values.shape} != {shape}")
        self.values = values
        self.symmetric = symmetric

    @classmethod
    def random(cls, n, grid, rng, symmetric=True):
        shape = (grid.size,) * (n - 1)
        vals = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        out = cls(n, grid, vals)
        return out.symmetrize() if symmetric else out

    @classmethod
    def from_callable(cls, n, grid, func):
        """Tabulate ``func(r_list, s_list)`` over the slice."""
        idx = _slot_indices(n, grid)
        r = [grid.r[k] for k in idx]
        s = [grid.s[k] for k in idx]
        vals = np.broadcast_to(func(r, s), (grid.size,) * (n - 1))
        return cls(n, grid, np.array(vals, dtype=complex))

    def copy(self):
        return type(self)(self.n, self.grid, self.values.copy(), self.symmetric)

    def _like(self, values, symmetric=None):
        sym = self.symmetric if symmetric is None else symmetric
        return DegreeNFunction(self.n, self.grid, values, sym)

    def __add__(self, other):
        _check_compatible(self, other)
        return self._like(self.values + other.values, self.symmetric and other.symmetric)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self._like(self.values - other.values, self.symmetric and other.symmetric)

    def __mul__(self, c):
        return self._like(self.values * c)

    __rmul__ = __mul__

    def momenta(self):
        """Component arrays (r_j, s_j) for j = 1..n, broadcast over the slice."""
        idx = _slot_indices(self.n, self.grid)
        return [self.grid.r[k] for k in idx], [self.grid.s[k] for k in idx]

    def total_omega(self):
        r, s = self.momenta()
        return sum(omega(rj, sj) for rj, sj in zip(r, s))

    def symmetrize(self):
        """Average over all permutations of the n momentum slots."""
        if self.n <= 1:
            return self._like(self.values.copy(), True)
        idx = _slot_indices(self.n, self.grid)
        acc = np.zeros_like(self.values)
        perms = list(permutations(range(self.n)))
        for perm in perms:
            acc += self.values[tuple(idx[j] for j in perm[:-1])]
        return self._like(acc / len(perms), True)


class DegreeTwoFunction(DegreeNFunction):
    """f(p) standing for F(p, -p) on the degree-two slice."""

    def __init__(self, grid, values=None, symmetric=False):
        super().__init__(2, grid, values, symmetric)

    def _like(self, values, symmetric=None):
        sym = self.symmetric if symmetric is None else symmetric
        return DegreeTwoFunction(self.grid, values, sym)

    @classmethod
    def from_callable(cls, grid, func):
        return cls(grid, np.asarray(func(grid.r, grid.s), dtype=complex) * np.ones(grid.size))

    def is_hermitian(self, atol=1e-12):
        """f(-p) == conj f(p), the image of a real lattice function."""
        neg = self.grid.neg(np.arange(self.grid.size))
        return bool(np.allclose(self.values[neg], np.conj(self.values), atol=atol))


def current_function(grid):
    """w_hat(p_1, p_2) = exp(-i r_2) on the slice, i.e. exp(i r) at p_1 = p."""
    return DegreeTwoFunction.from_callable(grid, lambda r, s: np.exp(1j * r))


def _check_compatible(F, G):
    if F.n != G.n:
        raise ParameterError(f"degree mismatch: {F.n} vs {G.n}")
    if F.grid != G.grid:
        raise ParameterError(f"grid mismatch: {F.grid} vs {G.grid}")


def pair_kernel(r_j, r_m):
    """Symmetric form of -(e^{i r_j} - e^{-i r_m}), i.e. -i (sin r_j + sin r_m)."""
    return -1j * (np.sin(r_j) + np.sin(r_m))


def apply_A_plus(F, literal=False):
    """Raise the degree: (A_+F)(p_1..p_{n+1}) = sum_{j<m} k(p_j, p_m) F(.., p_j+p_m, ..).

    With ``literal=True`` the ordered kernel -(e^{i r_j} - e^{-i r_m}) is used
    as written; its symmetrization coincides with the default symmetric form.
    """
    n = F.n
    _check_size(n + 1, F.grid)
    grid = F.grid
    idx = _slot_indices(n + 1, grid)
    out = np.zeros((grid.size,) * n, dtype=complex)
    for j in range(n + 1):
        for m in range(j + 1, n + 1):
            merged = grid.add(idx[j], idx[m])
            args = [merged] + [idx[l] for l in range(n + 1) if l not in (j, m)]
            if literal:
                kern = -(np.exp(1j * grid.r[idx[j]]) - np.exp(-1j * grid.r[idx[m]]))
            else:
                kern = pair_kernel(grid.r[idx[j]], grid.r[idx[m]])
            vals = F.values[tuple(args[: n - 1])] if n > 1 else F.values
            out = out + kern * vals
    return DegreeNFunction(n + 1, grid, out, symmetric=F.symmetric and not literal)


def apply_A_minus(G):
    """Lower the degree with A_- = -A_+^*, built from the kernel directly.

    (A_-G)(q_1..q_n) = -1/2 sum_i int dt conj k(t, q_i - t) G(.., t, q_i - t, ..).
    """
    n = G.n - 1
    if n < 1:
        raise ParameterError("A_- needs degree >= 2")
    grid = G.grid
    out_idx = _slot_indices(n, grid)
    t = np.arange(grid.size).reshape((1,) * (n - 1) + (grid.size,))
    q = [np.expand_dims(k, -1) for k in out_idx]
    acc = np.zeros((grid.size,) * (n - 1) + (grid.size,), dtype=complex)
    for i in range(n):
        rest = grid.add(q[i], grid.neg(t))
        args = [t, rest] + [q[l] for l in range(n) if l != i]
        kern = np.conj(pair_kernel(grid.r[t], grid.r[rest]))
        acc = acc + kern * G.values[tuple(args[:n])]
    out = -0.5 * grid.weight * acc.sum(axis=-1)
    return DegreeNFunction(n, grid, out, symmetric=G.symmetric)


def inner_product(F, G):
    """(1/n!) int dmu_n conj(F) G on the grid slice."""
    _check_compatible(F, G)
    w = F.grid.weight ** (F.n - 1)
    return complex(np.vdot(F.values, G.values) * w / factorial(F.n))


def multiply(F, multiplier):
    """Pointwise multiplication by an array tabulated on the slice."""
    return F._like(F.values * multiplier)


def degree_two_from_lattice(F_real):
    """Transform a real-space degree-two function F(x_1, x_2) to f(p) = F_hat(p, -p).

    ``F_real`` has shape (M, M, M, M) indexed by (x1_r, x1_s, x2_r, x2_s) on
    an M x M torus; returns a :class:`DegreeTwoFunction` on the matching grid.
    """
    M = F_real.shape[0]
    grid = MomentumGrid(M)
    # F_hat(p, -p) = sum_{x1,x2} F(x1,x2) exp(-i p (x1 - x2))
    diff = np.zeros((M, M), dtype=complex)
    for a in range(M):
        for b in range(M):
            diff += np.roll(np.roll(F_real[:, :, a, b], -a, axis=0), -b, axis=1)
    f = np.fft.fft2(diff).reshape(-1)
    return DegreeTwoFunction(grid, f)


def lattice_pairing_degree_two(F_real, G_real):
    """Translation-summed pairing (1/2!) sum_z sum_x conj F(x) G(x + z)."""
    M = F_real.shape[0]
    total = 0.0 + 0.0j
    for zr in range(M):
        for zs in range(M):
            Gz = np.roll(np.roll(G_real, -zr, axis=0), -zs, axis=1)
            Gz = np.roll(np.roll(Gz, -zr, axis=2), -zs, axis=3)
            total += np.vdot(F_real, Gz)
    return total / 2.0
