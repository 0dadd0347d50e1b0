import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asep2d.errors import ParameterError
from asep2d.lattice import (
    Configuration, RateBound, RngStream, instantaneous_current, run_trajectory, sample_bernoulli,
    sample_canonical, step_ctmc,
)


def test_empty_and_full():
    assert sample_bernoulli(0.0, 8, 8, RngStream(0)).particle_count == 0
    full = sample_bernoulli(1.0, 8, 8, RngStream(0))
    assert full.particle_count == 64
    before = full.occupancy.copy()
    step_ctmc(full, 10.0)
    assert np.array_equal(before, full.occupancy) and full.Q == 0


def test_mean_density_binomial():
    gen = RngStream(7).generator()
    n = [sample_bernoulli(0.5, 64, 64, gen).particle_count for _ in range(10_000)]
    tot = 10_000 * 64 * 64
    assert abs(np.sum(n) / tot - 0.5) < 3 * np.sqrt(0.25 / tot)


def test_free_particle_rates():
    dx, dy = [], []
    t = 20.0
    for r in range(400):
        occ = np.zeros((256, 256), dtype=np.uint8)
        occ[128, 128] = 1
        cfg = Configuration(occ)
        step_ctmc(cfg, t, RngStream(11, r))
        x, y = np.argwhere(cfg.occupancy)[0]
        dx.append(x - 128)
        dy.append(y - 128)
    dx, dy = np.array(dx) / t, np.array(dy, dtype=float)
    assert abs(dx.mean() - 1.0) < 4 * dx.std(ddof=1) / 20
    vr = dy.var(ddof=1) / t
    assert abs(vr - 1.0) < 4 * np.sqrt(2 / 399) * 1.2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_tracked_W_matches_recomputed(seed, rho):
    cfg = sample_bernoulli(rho, 6, 5, RngStream(seed))
    cfg.rho_w = rho
    k = cfg.particle_count
    step_ctmc(cfg, 3.0, check=True)
    assert cfg.particle_count == k
    if k:
        assert cfg.W_tracked == pytest.approx(cfg.current_W(), abs=1e-9)


def test_deterministic_streams():
    a = run_trajectory(sample_canonical(8, 4, 4, RngStream(3, 2)), [1.0, 2.0, 5.0])
    b = run_trajectory(sample_canonical(8, 4, 4, RngStream(3, 2)), [1.0, 2.0, 5.0])
    assert np.array_equal(a.snapshots, b.snapshots) and np.array_equal(a.J, b.J)


def test_instantaneous_current():
    occ = np.zeros((4, 4), dtype=np.uint8)
    cfg = Configuration(occ)
    assert instantaneous_current(cfg, (0, 0), 1) == 0.0
    occ[0, 0] = 1
    cfg = Configuration(occ)
    assert instantaneous_current(cfg, (0, 0), 1) == 1.0
    assert instantaneous_current(cfg, (0, 0), 2) == -0.5
    with pytest.raises(ParameterError):
        instantaneous_current(cfg, (0, 0), 3)


def test_packing_round_trip():
    cfg = sample_bernoulli(0.3, 7, 9, RngStream(1))
    back = Configuration.from_packed(cfg.packed(), 7, 9)
    assert np.array_equal(back.occupancy, cfg.occupancy)


def test_validation():
    with pytest.raises(ParameterError):
        sample_bernoulli(1.5, 4, 4, RngStream(0))
    with pytest.raises(ParameterError):
        sample_canonical(17, 4, 4, RngStream(0))
    with pytest.raises(ParameterError):
        RateBound(-1.0, 0.5, 0.5)
    cfg = sample_bernoulli(0.5, 4, 4, RngStream(0))
    step_ctmc(cfg, 1.0)
    with pytest.raises(ParameterError):
        step_ctmc(cfg, 0.5)
