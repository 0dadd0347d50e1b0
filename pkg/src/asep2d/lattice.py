"""Exclusion dynamics on an L_x x L_y torus, simulated by exact thinning.

Every particle carries a clock of rate ``cap = right + up + down`` (2 for the
default rates 1, 1/2, 1/2).  At each ring a direction is drawn in proportion
to its rate and the jump is performed iff the target site is empty, which
samples the continuous-time chain exactly.

Alongside the configuration the kernel integrates the degree-two current
W = sum_x (eta_x - rho)(eta_{x+e1} - rho) in time (J) and counts accepted
right jumps (Q).  A jump changes W only on the four axis-1 bonds touching
the source and target sites.
"""

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ParameterError

DEFAULT_RATES = (1.0, 0.5, 0.5)
_CHUNK = 1 << 15


@dataclass(frozen=True)
class RateBound:
    """Per-particle and total thinning caps."""

    right: float = 1.0
    up: float = 0.5
    down: float = 0.5

    def __post_init__(self):
        if min(self.right, self.up, self.down) < 0 or self.per_particle_cap <= 0:
            raise ParameterError("rates must be nonnegative and not all zero")

    @property
    def per_particle_cap(self):
        return self.right + self.up + self.down

    def total_cap(self, particle_count):
        return self.per_particle_cap * particle_count

    def as_array(self):
        return np.array([self.right, self.up, self.down])


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream: (seed, stream_id) fixes the Philox key."""

    seed: int
    stream_id: int = 0

    def generator(self):
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, self.stream_id])))


@dataclass
class Configuration:
    """Occupancy field on the torus plus the quantities integrated along a path.

    ``occupancy`` is a uint8 array of shape (Lx, Ly); axis 0 is the driven
    direction e1.
    """

    occupancy: np.ndarray
    time: float = 0.0
    J: float = 0.0
    Q: int = 0
    rho_w: float = 0.5
    _rng: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if self.occupancy.ndim != 2 or min(self.occupancy.shape) < 1:
            raise ParameterError("occupancy must be a 2-d array")
        if np.any(self.occupancy > 1):
            raise ParameterError("occupancy entries must be 0 or 1")

    @property
    def Lx(self):
        return self.occupancy.shape[0]

    @property
    def Ly(self):
        return self.occupancy.shape[1]

    @property
    def V(self):
        return self.occupancy.size

    @property
    def particle_count(self):
        return int(self.occupancy.sum())

    def packed(self):
        """Bit-packed copy of the occupancy (row-major)."""
        return np.packbits(self.occupancy.ravel())

    @classmethod
    def from_packed(cls, bits, Lx, Ly, **kw):
        occ = np.unpackbits(bits, count=Lx * Ly).reshape(Lx, Ly)
        return cls(occ, **kw)

    def current_W(self):
        d = self.occupancy.astype(float) - self.rho_w
        return float(np.sum(d * np.roll(d, -1, axis=0)))

    def copy(self):
        return Configuration(self.occupancy.copy(), self.time, self.J, self.Q, self.rho_w)


def _check_dims(Lx, Ly):
    if int(Lx) != Lx or int(Ly) != Ly or Lx < 2 or Ly < 2:
        raise ParameterError(f"lattice must be at least 2 x 2, got {Lx} x {Ly}")


def sample_bernoulli(rho, Lx, Ly, rng):
    """Product Bernoulli(rho) configuration on an Lx x Ly torus."""
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"density must lie in [0, 1], got {rho}")
    _check_dims(Lx, Ly)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    occ = (gen.random((Lx, Ly)) < rho).astype(np.uint8)
    cfg = Configuration(occ)
    cfg._rng = gen
    return cfg


def sample_canonical(k, Lx, Ly, rng):
    """Uniform configuration with exactly k particles."""
    _check_dims(Lx, Ly)
    if not 0 <= k <= Lx * Ly:
        raise ParameterError(f"particle count {k} outside 0..{Lx * Ly}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    occ = np.zeros(Lx * Ly, dtype=np.uint8)
    occ[gen.permutation(Lx * Ly)[:k]] = 1
    cfg = Configuration(occ.reshape(Lx, Ly))
    cfg._rng = gen
    return cfg


def instantaneous_current(cfg, x, direction):
    """eta_x (1 - eta_{x+e1}) for direction 1, (eta_{x+e2} - eta_x)/2 for direction 2."""
    x1, x2 = x
    occ = cfg.occupancy
    here = int(occ[x1 % cfg.Lx, x2 % cfg.Ly])
    if direction == 1:
        return float(here * (1 - int(occ[(x1 + 1) % cfg.Lx, x2 % cfg.Ly])))
    if direction == 2:
        return 0.5 * (int(occ[x1 % cfg.Lx, (x2 + 1) % cfg.Ly]) - here)
    raise ParameterError(f"direction must be 1 or 2, got {direction}")


@nb.njit(cache=True, inline="always")
def _bond(occ, a1, a2, Lx, rho):
    b1 = a1 + 1
    if b1 == Lx:
        b1 = 0
    return (occ[a1, a2] - rho) * (occ[b1, a2] - rho)


@nb.njit(cache=True, inline="always")
def _local_W(occ, p1, p2, q1, q2, Lx, rho):
    m1 = p1 - 1 if p1 > 0 else Lx - 1
    n1 = q1 - 1 if q1 > 0 else Lx - 1
    return (_bond(occ, m1, p2, Lx, rho) + _bond(occ, p1, p2, Lx, rho)
            + _bond(occ, n1, q2, Lx, rho) + _bond(occ, q1, q2, Lx, rho))


@nb.njit(cache=True)
def _advance(occ, px, py, state, t_stop, rates, uni, upos, rho):
    """Run events until t_stop or until the uniform buffer runs out.

    ``state`` = [t, J, W, Q, accepted, proposed].  Returns the new buffer
    position; the caller refills when it is within two of the end.
    """
    Lx, Ly = occ.shape
    k = px.shape[0]
    cap = rates[0] + rates[1] + rates[2]
    c_right = rates[0] / cap
    c_up = (rates[0] + rates[1]) / cap
    total = cap * k
    t, J, W = state[0], state[1], state[2]
    n = uni.shape[0]
    while upos + 2 <= n:
        dt = -np.log(1.0 - uni[upos]) / total
        if t + dt > t_stop:
            # memoryless clocks: discard the overshooting draw
            J += W * (t_stop - t)
            t = t_stop
            upos += 1
            break
        t += dt
        J += W * dt
        u = uni[upos + 1] * k
        upos += 2
        i = int(u)
        if i >= k:
            i = k - 1
        f = u - i
        p1, p2 = px[i], py[i]
        q1, q2 = p1, p2
        right = False
        if f < c_right:
            q1 = p1 + 1 if p1 + 1 < Lx else 0
            right = True
        elif f < c_up:
            q2 = p2 + 1 if p2 + 1 < Ly else 0
        else:
            q2 = p2 - 1 if p2 > 0 else Ly - 1
        state[5] += 1
        if occ[q1, q2] == 1:
            continue
        before = _local_W(occ, p1, p2, q1, q2, Lx, rho)
        occ[p1, p2] = 0
        occ[q1, q2] = 1
        W += _local_W(occ, p1, p2, q1, q2, Lx, rho) - before
        px[i] = q1
        py[i] = q2
        state[4] += 1
        if right:
            state[3] += 1
    state[0], state[1], state[2] = t, J, W
    return upos


class _UniformBuffer:
    """Uniforms handed to the kernel in chunks; leftovers carry over between calls."""

    def __init__(self, gen):
        self.gen = gen
        self.arr = np.empty(0)
        self.pos = 0

    def ensure(self):
        if self.pos + 2 > self.arr.size:
            self.arr = self.gen.random(_CHUNK)
            self.pos = 0


def _resolve_generator(cfg, rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        return cfg._rng if cfg._rng is not None else np.random.default_rng()
    return rng


class _Driver:
    """Kernel state for repeated advances of one configuration."""

    def __init__(self, cfg, gen, rates):
        bound = rates if isinstance(rates, RateBound) else RateBound(*rates)
        self.cfg = cfg
        self.rates = bound.as_array()
        pos = np.argwhere(cfg.occupancy == 1)
        self.k = pos.shape[0]
        self.px = np.ascontiguousarray(pos[:, 0], dtype=np.int64)
        self.py = np.ascontiguousarray(pos[:, 1], dtype=np.int64)
        self.state = np.array([cfg.time, cfg.J, cfg.current_W(), cfg.Q, 0.0, 0.0])
        self.buf = _UniformBuffer(gen)

    def advance(self, t_target):
        cfg = self.cfg
        if self.k == 0:
            self.state[1] += self.state[2] * (t_target - self.state[0])
            self.state[0] = t_target
        while self.state[0] < t_target:
            self.buf.ensure()
            self.buf.pos = _advance(cfg.occupancy, self.px, self.py, self.state, float(t_target),
                                    self.rates, self.buf.arr, self.buf.pos, cfg.rho_w)
        cfg.time = float(t_target)
        cfg.J = float(self.state[1])
        cfg.Q = int(self.state[3])
        cfg.W_tracked = float(self.state[2])
        return cfg


def step_ctmc(cfg, t_target, rng=None, rates=DEFAULT_RATES, check=False):
    """Advance ``cfg`` in place to ``t_target`` and return it.

    Parameters
    ----------
    cfg : Configuration
    t_target : float
        Absolute time, at least ``cfg.time``.
    rng : RngStream or numpy Generator, optional
        Defaults to the generator attached when ``cfg`` was sampled.
    rates : (right, up, down)
    check : bool
        Assert particle conservation after the run.
    """
    if t_target < cfg.time:
        raise ParameterError(f"t_target {t_target} precedes current time {cfg.time}")
    gen = _resolve_generator(cfg, rng)
    cfg._rng = gen
    drv = _Driver(cfg, gen, rates)
    drv.advance(t_target)
    if check and cfg.occupancy.sum() != drv.k:
        raise AssertionError("particle number changed")
    return cfg


@dataclass
class Trajectory:
    """Samples of one replica on a time grid."""

    t_grid: np.ndarray
    snapshots: np.ndarray  # (len(t_grid), Lx, Ly) uint8, or None
    J: np.ndarray
    Q: np.ndarray
    particle_count: int
    events: int = 0


def run_trajectory(cfg, t_grid, rng=None, rates=DEFAULT_RATES, keep_snapshots=True):
    """Advance through the sorted ``t_grid`` recording occupancy, J and Q."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < cfg.time:
        raise ParameterError("t_grid must be sorted and start at or after the current time")
    snaps = np.empty((t_grid.size,) + cfg.occupancy.shape, dtype=np.uint8) if keep_snapshots else None
    J = np.empty(t_grid.size)
    Q = np.empty(t_grid.size, dtype=np.int64)
    gen = _resolve_generator(cfg, rng)
    cfg._rng = gen
    drv = _Driver(cfg, gen, rates)
    k = drv.k
    for i, t in enumerate(t_grid):
        drv.advance(t)
        if keep_snapshots:
            snaps[i] = cfg.occupancy
        J[i] = cfg.J
        Q[i] = cfg.Q
    return Trajectory(t_grid, snaps, J, Q, k)
