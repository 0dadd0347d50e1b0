"""Exact generator of the exclusion process on small tori, in a canonical ensemble.

States are bitmasks over the L_x * L_y sites (site index ``x1 * L_y + x2``,
axis 1 is the driven direction).  The generator acts on functions as
(L f)(eta) = sum_eta' Q[eta, eta'] (f(eta') - f(eta)), so L is the matrix Q
with the escape rates on the diagonal.  The uniform measure on a canonical
ensemble is stationary because the rates are translation invariant.
"""

import warnings
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, expm_multiply, gmres

from .errors import CapacityError, NumericalError, ParameterError

DEFAULT_CAP = 10**6
RATES = {"right": 1.0, "up": 0.5, "down": 0.5}


@dataclass
class CanonicalEnsemble:
    """All configurations with exactly ``k`` particles on an L_x x L_y torus."""

    Lx: int
    Ly: int
    k: int
    states: np.ndarray  # sorted uint64 bitmasks

    @classmethod
    def build(cls, Lx, Ly, k, cap=DEFAULT_CAP):
        V = Lx * Ly
        if Lx < 1 or Ly < 1 or not 0 <= k <= V:
            raise ParameterError(f"invalid ensemble {Lx}x{Ly}, k={k}")
        if V > 63:
            raise CapacityError("bitmask states need at most 63 sites")
        size = comb(V, k)
        if size > cap:
            raise CapacityError(f"{size} states exceed the cap of {cap}")
        states = np.fromiter(
            (sum(1 << i for i in c) for c in combinations(range(V), k)), dtype=np.uint64, count=size
        )
        states.sort()
        return cls(Lx, Ly, k, states)

    @property
    def V(self):
        return self.Lx * self.Ly

    @property
    def size(self):
        return self.states.size

    @property
    def rho(self):
        return self.k / self.V

    def site(self, x1, x2):
        return (x1 % self.Lx) * self.Ly + (x2 % self.Ly)

    def index(self, masks):
        idx = np.searchsorted(self.states, masks)
        if np.any(idx >= self.size) or np.any(self.states[np.minimum(idx, self.size - 1)] != masks):
            raise ParameterError("configuration outside the ensemble")
        return idx

    def occupation(self, x1, x2):
        """eta at site (x1, x2) for every state, as float array."""
        return ((self.states >> np.uint64(self.site(x1, x2))) & np.uint64(1)).astype(float)

    def occupancy_matrix(self):
        """Array (size, Lx, Ly) of occupations."""
        bits = (self.states[:, None] >> np.arange(self.V, dtype=np.uint64)[None, :]) & np.uint64(1)
        return bits.astype(np.int8).reshape(self.size, self.Lx, self.Ly)


@dataclass
class GeneratorMatrix:
    ensemble: CanonicalEnsemble
    L: sp.csr_matrix
    S: sp.csr_matrix
    A: sp.csr_matrix

    @property
    def size(self):
        return self.ensemble.size


def _moves(ens):
    """Yield (source site, target site, rate) for every site and direction."""
    for x1 in range(ens.Lx):
        for x2 in range(ens.Ly):
            src = ens.site(x1, x2)
            yield src, ens.site(x1 + 1, x2), RATES["right"]
            yield src, ens.site(x1, x2 + 1), RATES["up"]
            yield src, ens.site(x1, x2 - 1), RATES["down"]


def build_generator(Lx, Ly, k, cap=DEFAULT_CAP, ensemble=None):
    """Sparse generator of the process restricted to k particles on Lx x Ly.

    Right jumps have rate 1, up and down jumps rate 1/2, all subject to the
    exclusion rule.  Returns L together with S = (L + L^T)/2 and A = (L - L^T)/2,
    the symmetric and antisymmetric parts in the uniform inner product.
    """
    ens = ensemble or CanonicalEnsemble.build(Lx, Ly, k, cap)
    st = ens.states
    one = np.uint64(1)
    rows, cols, vals = [], [], []
    out = np.zeros(ens.size)
    for src, dst, rate in _moves(ens):
        if src == dst:
            continue
        ok = ((st >> np.uint64(src)) & one).astype(bool) & ~((st >> np.uint64(dst)) & one).astype(bool)
        i = np.nonzero(ok)[0]
        target = st[i] ^ (one << np.uint64(src)) ^ (one << np.uint64(dst))
        rows.append(i)
        cols.append(ens.index(target))
        vals.append(np.full(i.size, rate))
        out[i] += rate
    rows = np.concatenate(rows + [np.arange(ens.size)])
    cols = np.concatenate(cols + [np.arange(ens.size)])
    vals = np.concatenate(vals + [-out])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(ens.size, ens.size))
    L.sum_duplicates()
    Lt = L.T.tocsr()
    return GeneratorMatrix(ens, L, ((L + Lt) * 0.5).tocsr(), ((L - Lt) * 0.5).tocsr())


def stationarity_residuals(gen):
    """(max |row sum|, max |column sum|); both vanish for a doubly stochastic generator."""
    return float(np.abs(gen.L.sum(axis=1)).max()), float(np.abs(gen.L.sum(axis=0)).max())


# -- currents -------------------------------------------------------------------


def instantaneous_currents(ens, x1=0, x2=0):
    """Currents across the bonds leaving (x1, x2), for every state.

    Axis 1: eta_x (1 - eta_{x+e1}).  Axis 2: (eta_{x+e2} - eta_x) / 2.
    """
    e = ens.occupation
    c1 = e(x1, x2) * (1.0 - e(x1 + 1, x2))
    c2 = 0.5 * (e(x1, x2 + 1) - e(x1, x2))
    return c1, c2


def conservation_residuals(gen):
    """Max deviations of L eta_0 from the two forms of the discrete continuity equation.

    ``balance`` is L eta_0 - [(j1(-e1) - j1(0)) - (j2(-e2) - j2(0))], which
    holds exactly with the axis-2 current (eta_{x+e2} - eta_x)/2.
    ``literal`` is L eta_0 + sum_i (j_i(-e_i) - j_i(0)), the same identity with
    both orientations taken as outward from the bond's left end; it fails.
    """
    ens = gen.ensemble
    Leta = gen.L @ ens.occupation(0, 0)
    j1_0, j2_0 = instantaneous_currents(ens, 0, 0)
    j1_m, _ = instantaneous_currents(ens, -1, 0)
    _, j2_m = instantaneous_currents(ens, 0, -1)
    balance = Leta - ((j1_m - j1_0) - (j2_m - j2_0))
    literal = Leta + (j1_m - j1_0) + (j2_m - j2_0)
    return {"balance": float(np.abs(balance).max()), "literal": float(np.abs(literal).max())}


def degree_two_current(ens, centered=True):
    """W(eta) = sum_x (eta_x - rho)(eta_{x+e1} - rho), optionally minus its ensemble mean.

    In a canonical ensemble W has a nonzero mean of order one, which would add
    mean^2 / lam to every resolvent value; the fluctuation is what enters the
    variance of the time integral, so centering is the default.
    """
    rho = ens.rho
    occ = ens.occupancy_matrix().astype(float) - rho
    W = np.sum(occ * np.roll(occ, -1, axis=1), axis=(1, 2))
    if centered:
        W = W - W.mean()
    return W


def canonical_pair_mean(V, k, rho=0.5):
    """E[(eta_x - rho)(eta_y - rho)] for x != y in the k-particle ensemble on V sites."""
    p1 = k / V
    p2 = k * (k - 1) / (V * (V - 1))
    return p2 - 2 * rho * p1 + rho * rho


@dataclass
class ResolventValue:
    lam: float
    value: float
    residual: float
    iterations: int


def exact_resolvent(gen, lam, tol=1e-12, maxiter=20000, centered=True, x0=None):
    """V^-1 <W, (lam - L)^-1 W> under the uniform measure on the ensemble.

    Solved by Jacobi-preconditioned GMRES (lam - L is diagonally dominant);
    the returned residual is the relative 2-norm of the final equation.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    ens = gen.ensemble
    W = degree_two_current(ens, centered)
    n = gen.size
    Aop = (lam * sp.identity(n, format="csr") - gen.L).tocsr()
    d = Aop.diagonal()
    pre = LinearOperator((n, n), matvec=lambda v: v / d)
    count = [0]

    def cb(_):
        count[0] += 1

    u, info = gmres(Aop, W, x0=x0, rtol=tol, atol=0.0, restart=80, maxiter=maxiter,
                    M=pre, callback=cb, callback_type="pr_norm")
    res = float(np.linalg.norm(Aop @ u - W) / np.linalg.norm(W))
    if info != 0 and res > 1e-10:
        raise NumericalError(f"resolvent solve at lambda={lam} did not converge", res)
    return ResolventValue(lam, float(np.dot(W, u) / n / ens.V), res, count[0])


def exact_current_variance(gen, times, centered=True):
    """Var[int_0^t W ds] under the uniform stationary start, for each t.

    Uses Var = 2 int_0^t (t - s) <W, e^{sL} W> ds and evaluates the double
    integral as one matrix exponential of the augmented generator
    [[L, W, 0], [0, 0, 1], [0, 0, 0]] applied to the last unit vector.
    """
    ens = gen.ensemble
    W = degree_two_current(ens, centered)
    n = gen.size
    B = sp.bmat(
        [
            [gen.L, sp.csr_matrix(W[:, None]), None],
            [None, None, sp.csr_matrix(np.ones((1, 1)))],
            [None, None, sp.csr_matrix((1, 1))],
        ],
        format="csr",
    )
    z0 = np.zeros(n + 2)
    z0[-1] = 1.0
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty(times.size)
    for i, t in enumerate(times):
        if t == 0:
            out[i] = 0.0
            continue
        z = expm_multiply(B * t, z0)
        # top block of exp(tB) e_last is int_0^t s e^{(t-s)L} W ds
        out[i] = 2.0 * np.dot(W, z[:n]) / n
    return out


def resolvent_bound_ratio(gen, times):
    """Exact Var[t^-1/2 J(t)] / <W, (1/t - L)^-1 W>, both per volume."""
    var = exact_current_variance(gen, times)
    rows = []
    for t, v in zip(np.atleast_1d(times), var):
        r = exact_resolvent(gen, 1.0 / t)
        rows.append((float(t), v / t / gen.ensemble.V, r.value, v / t / gen.ensemble.V / r.value))
    return rows


# -- degree-two duality checks on the full hypercube ------------------------------


def full_generator(Lx, Ly):
    """Generator on all of {0,1}^V (every particle number), dense."""
    V = Lx * Ly
    if V > 12:
        raise CapacityError("full hypercube generator is dense; use at most 12 sites")
    L = np.zeros((2**V, 2**V))
    for k in range(V + 1):
        ens = CanonicalEnsemble.build(Lx, Ly, k)
        g = build_generator(Lx, Ly, k, ensemble=ens)
        idx = ens.states.astype(np.int64)
        L[np.ix_(idx, idx)] = g.L.toarray()
    return L


def walsh_basis(V):
    """xi_Lambda(eta) = prod_{x in Lambda} (2 eta_x - 1) as columns, with subset degrees."""
    states = np.arange(2**V)
    xi = 2.0 * ((states[:, None] >> np.arange(V)[None, :]) & 1) - 1.0
    subsets = np.arange(2**V)
    deg = np.array([bin(s).count("1") for s in subsets])
    H = np.ones((2**V, 2**V))
    for x in range(V):
        mask = ((subsets >> x) & 1).astype(bool)
        H[:, mask] *= xi[:, x:x + 1]
    return H, deg


@dataclass
class DualityReport:
    symmetric_degree_leak: float
    M_norm: float
    A_plus_mean: float
    adjoint_error: float
    degree_change: dict

    @property
    def ok(self):
        return max(self.symmetric_degree_leak, self.M_norm, self.A_plus_mean, self.adjoint_error) < 1e-10


def verify_duality_degree2(Lx=3, Ly=3, seed=0, n_random=20):
    """Walsh-basis checks at density 1/2 on the full configuration space.

    In the basis xi_Lambda (orthonormal under the uniform measure = nu_{1/2}),
    S preserves degree, A splits into A_+ (degree + 1) and A_- (degree - 1)
    with no degree-preserving part M, <A_+ F> = 0 and A_+^* = -A_-.
    """
    V = Lx * Ly
    L = full_generator(Lx, Ly)
    H, deg = walsh_basis(V)
    N = 2**V
    # matrix elements in the orthonormal basis: <xi_a, L xi_b> = H^T L H / N
    Lh = H.T @ L @ H / N
    Sh = 0.5 * (Lh + Lh.T)
    Ah = 0.5 * (Lh - Lh.T)
    dd = deg[:, None] - deg[None, :]
    leak = float(np.abs(Sh[dd != 0]).max())
    M_norm = float(np.abs(Ah[dd == 0]).max())
    change = {int(c): float(np.abs(Ah[dd == c]).max()) for c in np.unique(dd) if np.abs(Ah[dd == c]).max() > 1e-12}
    A_plus = np.where(dd == 1, Ah, 0.0)
    A_minus = np.where(dd == -1, Ah, 0.0)
    rng = np.random.default_rng(seed)
    mean_err = adj_err = 0.0
    d2 = deg == 2
    d3 = deg == 3
    for _ in range(n_random):
        F = np.zeros(N)
        F[d2] = rng.normal(size=d2.sum())
        G = np.zeros(N)
        G[d3] = rng.normal(size=d3.sum())
        AF = A_plus @ F
        # <A_+ F> is the coefficient on the constant function xi_empty
        mean_err = max(mean_err, abs(AF[0]), abs(np.sum(H @ AF) / N))
        adj_err = max(adj_err, abs(G @ AF + (A_minus @ G) @ F))
    return DualityReport(leak, M_norm, mean_err, adj_err, change)


def canonical_w_moments(ens):
    """Exact canonical E[W]/V and Var[W]/V for the uncentered degree-two current."""
    W = degree_two_current(ens, centered=False)
    return float(W.mean() / ens.V), float(W.var() / ens.V)


def check_lambda_scaling(values, lambdas, w2):
    """lam * value <= <<w, w>> for each lambda."""
    bad = [(l, v) for l, v in zip(lambdas, values) if l * v > w2 * (1 + 1e-9)]
    if bad:
        warnings.warn(f"lambda-scaling bound violated at {bad}")
    return not bad
