"""Exact truncated hierarchy on a uniform M x M momentum torus.

Degree-k symmetric functions are stored as real flat arrays over the first
k - 1 momenta (the last one is fixed by momentum conservation).  With
A_+ = -i At and A_+^* = i At^T the nested resolvent is real:

    u_2 = [lam - S + At^T (lam - S + At^T (...)^{-1} At)^{-1} At]^{-1} w.

Flat layout: momentum index k = ir * M + is, degree-k arrays are C-ordered
over (M^2,) * (k - 1), matching ``fourier.DegreeNFunction``.
"""

import numba as nb
import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .errors import CapacityError, NumericalError, ParameterError
from .fourier import MAX_DEGREE, MAX_VALUES, MomentumGrid

# degree-5 arrays only ever appear as scratch, so allow a larger cap
SCRATCH_VALUES = 2.5 * MAX_VALUES


@nb.njit(cache=True)
def _raise(F, k, M, sr, add, neg):
    """Real At: degree k -> k + 1."""
    base = M * M
    size = base**k
    out = np.empty(size)
    d = np.empty(k + 1, dtype=np.int64)
    for L in range(size):
        rem = L
        last = 0
        for j in range(k - 1, -1, -1):
            d[j] = rem % base
            rem //= base
            last = add[last, d[j]]
        d[k] = neg[last]
        acc = 0.0
        for j in range(k + 1):
            for m in range(j + 1, k + 1):
                idx = 0
                if k > 1:
                    idx = add[d[j], d[m]]
                    cnt = 1
                    for l in range(k + 1):
                        if cnt >= k - 1:
                            break
                        if l == j or l == m:
                            continue
                        idx = idx * base + d[l]
                        cnt += 1
                acc += (sr[d[j]] + sr[d[m]]) * F[idx]
        out[L] = acc
    return out


@nb.njit(cache=True)
def _lower(G, k, M, sr, weight, add, neg):
    """Real At^T: degree k + 1 -> k (adjoint for the weighted pairings)."""
    base = M * M
    size = base ** (k - 1)
    out = np.empty(size)
    q = np.empty(k, dtype=np.int64)
    stride = base ** (k - 2) if k >= 2 else 1
    for L in range(size):
        rem = L
        last = 0
        for j in range(k - 2, -1, -1):
            q[j] = rem % base
            rem //= base
            last = add[last, q[j]]
        q[k - 1] = neg[last]
        acc = 0.0
        for i in range(k):
            # digits after the split pair do not depend on t
            tail = 0
            cnt = 2
            for l in range(k):
                if cnt >= k:
                    break
                if l == i:
                    continue
                tail = tail * base + q[l]
                cnt += 1
            for t in range(base):
                u = add[q[i], neg[t]]
                if k == 1:
                    idx = t
                else:
                    idx = (t * base + u) * stride + tail
                acc += (sr[t] + sr[u]) * G[idx]
        out[L] = 0.5 * weight * acc
    return out


@nb.njit(cache=True)
def _omega_total(k, M, om):
    base = M * M
    size = base ** (k - 1)
    out = np.empty(size)
    for L in range(size):
        rem = L
        acc = 0.0
        acc_r = 0
        acc_s = 0
        for j in range(k - 1):
            dj = rem % base
            rem //= base
            acc += om[dj]
            acc_r += dj // M
            acc_s += dj % M
        last = ((-acc_r) % M) * M + (-acc_s) % M
        out[L] = acc + om[last]
    return out


class TorusHierarchy:
    """Real-form operators At_k, At_k^T and omega_k on a uniform torus."""

    def __init__(self, grid, lam, n):
        if not isinstance(grid, MomentumGrid):
            raise ParameterError("TorusHierarchy needs a MomentumGrid")
        if not 2 <= n <= MAX_DEGREE:
            raise CapacityError(f"truncation degree {n} outside 2..{MAX_DEGREE}")
        if lam <= 0:
            raise ParameterError(f"lambda must be positive, got {lam}")
        M = grid.M
        if (M * M) ** (n - 1) > SCRATCH_VALUES:
            raise CapacityError(f"degree {n} on M={M} needs {(M * M) ** (n - 1):.3g} values")
        self.grid, self.lam, self.n, self.M = grid, float(lam), n, M
        self.sr = np.sin(grid.r)
        ks = np.arange(M * M)
        self.add = grid.add(ks[:, None], ks[None, :]).astype(np.int64)
        self.neg = grid.neg(ks).astype(np.int64)
        om = grid.omega()
        self.denom = {k: self.lam + _omega_total(k, M, om) for k in range(2, n + 1)}

    def raise_(self, F, k):
        return _raise(np.ascontiguousarray(F, dtype=float), k, self.M, self.sr, self.add, self.neg)

    def lower(self, G, k):
        return _lower(np.ascontiguousarray(G, dtype=float), k, self.M, self.sr, self.grid.weight, self.add, self.neg)

    def current(self):
        """Symmetrized current cos(r) on the degree-two slice."""
        return np.cos(self.grid.r)

    def pairing(self, f, g, k=2):
        return self.grid.weight ** (k - 1) / float(np.prod(np.arange(1, k + 1))) * float(f @ g)

    # nested CG ---------------------------------------------------------

    def block_apply(self, x, k, tol, maxiter, stats):
        """B_k x = (lam + omega_k) x + At^T B_{k+1}^{-1} At x, B_n = lam + omega_n."""
        out = self.denom[k] * x
        if k == self.n:
            return out
        y = self.raise_(x, k)
        z = self.block_solve(y, k + 1, tol, maxiter, stats)
        return out + self.lower(z, k)

    def block_solve(self, b, k, tol, maxiter, stats):
        if k == self.n:
            return b / self.denom[k]
        if not np.any(b):
            return np.zeros_like(b)
        N = b.size
        op = LinearOperator((N, N), matvec=lambda v: self.block_apply(v, k, tol, maxiter, stats))
        pre = LinearOperator((N, N), matvec=lambda v: v / self.denom[k])
        x, info = cg(op, b, rtol=tol, atol=0.0, maxiter=maxiter, M=pre)
        if info != 0:
            res = np.linalg.norm(op.matvec(x) - b) / np.linalg.norm(b)
            raise NumericalError(f"nested CG at degree {k} did not converge", res)
        stats[k] = stats.get(k, 0) + 1
        return x

    def solve_nested(self, tol=1e-11, maxiter=400):
        w = self.current()
        stats = {}
        u = self.block_solve(w, 2, tol, maxiter, stats)
        r = self.block_apply(u, 2, tol, maxiter, stats) - w
        return u, float(np.linalg.norm(r) / np.linalg.norm(w)), stats

    # block GMRES on the truncated system -------------------------------

    def _levels(self):
        last = self.n - 1 if self.n > 2 else 2
        sizes = [(self.M * self.M) ** (k - 1) for k in range(2, last + 1)]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        return list(range(2, last + 1)), offs

    def system_apply(self, x):
        """Rows: -At u_{k-1} + (lam + omega_k) u_k + At^T u_{k+1}; top degree eliminated."""
        levels, offs = self._levels()
        parts = [x[offs[i]:offs[i + 1]] for i in range(len(levels))]
        out = []
        for i, k in enumerate(levels):
            y = self.denom[k] * parts[i]
            if i > 0:
                y = y - self.raise_(parts[i - 1], k - 1)
            if k + 1 < self.n:
                y = y + self.lower(parts[i + 1], k)
            elif k + 1 == self.n:
                up = self.raise_(parts[i], k) / self.denom[self.n]
                y = y + self.lower(up, k)
            out.append(y)
        return np.concatenate(out)

    def solve_block(self, tol=1e-11, maxiter=2000, restart=60):
        levels, offs = self._levels()
        N = int(offs[-1])
        rhs = np.zeros(N)
        rhs[: offs[1]] = self.current()
        diag = np.concatenate([self.denom[k] for k in levels])
        op = LinearOperator((N, N), matvec=self.system_apply)
        pre = LinearOperator((N, N), matvec=lambda v: v / diag)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = gmres(op, rhs, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter,
                        M=pre, callback=cb, callback_type="pr_norm")
        res = float(np.linalg.norm(op.matvec(x) - rhs) / np.linalg.norm(rhs))
        if info != 0 and res > 10 * tol:
            raise NumericalError("block GMRES did not converge", res)
        return x[: offs[1]], res, {"gmres_iterations": count[0]}

    def value(self, solver="nested", tol=1e-11, maxiter=None):
        """<w, u_2> for the degree-n truncation."""
        if solver == "nested":
            u, res, stats = self.solve_nested(tol, maxiter or 400)
        elif solver == "block":
            u, res, stats = self.solve_block(tol, maxiter or 2000)
        else:
            raise ParameterError(f"unknown solver {solver!r}")
        return self.pairing(self.current(), u), res, stats
