import numpy as np
import pytest

from asep2d.errors import CapacityError, ParameterError
from asep2d.fourier import DegreeNFunction, MomentumGrid, apply_A_minus, apply_A_plus
from asep2d.nystrom import DegreeTwoBlock, GradedGrid, UniformNodes, degree_three_value
from asep2d.torus import TorusHierarchy


def test_torus_kernels_match_reference_operators():
    g = MomentumGrid(4)
    th = TorusHierarchy(g, 0.1, 3)
    F = DegreeNFunction.random(2, g, np.random.default_rng(1))
    F = DegreeNFunction(2, g, F.values.real.astype(complex), True)
    ref = apply_A_plus(F)
    # real form At = i A_+
    assert np.allclose(th.raise_(F.values.real, 2), (1j * ref.values).real.ravel(), atol=1e-13)
    G = np.random.default_rng(2).normal(size=(16, 16))
    G = 0.5 * (G + G.T)
    low = apply_A_minus(DegreeNFunction(3, g, G.astype(complex), True))
    assert np.allclose(th.lower(G.ravel(), 2), (1j * low.values).real, atol=1e-12)


def test_nystrom_on_uniform_nodes_matches_torus_engine():
    lam, M = 0.1, 8
    v_nys, _, _ = degree_three_value(lam, UniformNodes(M))
    v_tor, _, _ = TorusHierarchy(MomentumGrid(M), lam, 3).value()
    assert v_nys == pytest.approx(v_tor, rel=1e-9)


def test_nested_and_block_solvers_agree():
    th = TorusHierarchy(MomentumGrid(6), 0.05, 4)
    a, _, _ = th.value("nested")
    b, _, _ = th.value("block")
    assert a == pytest.approx(b, rel=1e-8)


def test_block_is_symmetric_positive():
    b = DegreeTwoBlock(1e-3, GradedGrid.for_lambda(1e-3, order=2))
    rng = np.random.default_rng(0)
    f, g = rng.normal(size=(2, b.size))
    assert b.form(f, b.apply(g)) == pytest.approx(b.form(g, b.apply(f)), rel=1e-10)
    assert b.form(f, b.apply(f)) > 0
    assert b.form(f, b.apply_T(f)) >= 0


def test_graded_refinement_small():
    lam = 1e-3
    g = GradedGrid.for_lambda(lam, order=3)
    a, _, _ = degree_three_value(lam, g)
    c, _, _ = degree_three_value(lam, g.refined())
    assert abs(a - c) / c < 1e-3


def test_value_grows_as_lambda_drops():
    v = [degree_three_value(lam, GradedGrid.for_lambda(lam, order=2))[0] for lam in (1e-2, 1e-4)]
    assert v[1] > v[0]


def test_capacity_and_parameters():
    with pytest.raises(CapacityError):
        TorusHierarchy(MomentumGrid(64), 1e-3, 4)
    with pytest.raises(ParameterError):
        TorusHierarchy(MomentumGrid(4), -1.0, 3)
    with pytest.raises(ParameterError):
        GradedGrid(0.0)
