import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import square_mesh
from ritzlab.corpus import get_function
from ritzlab.fem import FeSpace
from ritzlab.fields import PiecewiseField
from ritzlab.maximal import RadiusGrid, ball_average, ball_averages, maximal_oracle, maximal_value
from ritzlab.ritz import ritz_project

MESH = square_mesh(3)


def _const(c=1.0):
    return PiecewiseField.from_callable(lambda p: np.full(p.shape[:-1], c), MESH)


def test_radius_grid():
    g = RadiusGrid(0.01, 1.0, 1.05)
    r = g.radii
    assert r[0] == 0.01 and r[-1] >= 1.0
    assert np.allclose(r[1:] / r[:-1], 1.05)
    with pytest.raises(ValueError):
        RadiusGrid(0.01, 1.0, 1.2)
    with pytest.raises(ValueError):
        RadiusGrid(1.0, 0.5)


def test_ball_average_of_constant_inside():
    assert ball_average(_const(2.0), (0.5, 0.5), 0.2) == pytest.approx(2.0, rel=1e-12)


def test_ball_average_counts_zero_extension():
    # ball centred at a corner: a quarter lies in the square
    assert ball_average(_const(), (0.0, 0.0), 0.3, n_theta=256) == pytest.approx(0.25, rel=1e-3)


def test_ball_averages_match_individual():
    f = PiecewiseField.from_analytic_gradient(get_function("sine"), MESH)
    radii = np.geomspace(0.01, 1.0, 20)
    many = ball_averages(f, (0.3, 0.4), radii, n_theta=128, n_rho=8)
    dense = np.array([ball_average(f, (0.3, 0.4), r, 512, 64) for r in radii])
    inside = radii < 0.3
    assert np.allclose(many[inside], dense[inside], rtol=1e-5)
    # balls crossing the boundary see a jump, so only percent-level agreement
    assert np.allclose(many, dense, rtol=1e-2)


def test_maximal_of_constant_field():
    assert maximal_value(_const(), (0.4, 0.6)) == pytest.approx(1.0, rel=1e-6)


def test_maximal_dominates_value_at_lebesgue_point():
    f = PiecewiseField.from_analytic_gradient(get_function("sine"), MESH)
    for z in [(0.2, 0.3), (0.7, 0.6)]:
        assert maximal_value(f, z) >= np.linalg.norm(f.evaluate(np.array([z]))[0]) * (1 - 1e-3)


@pytest.mark.parametrize("name,z", [("sine", (0.31, 0.42)), ("sing06", (0.52, 0.49)), ("osc", (0.2, 0.8))])
def test_agrees_with_oracle(name, z):
    f = PiecewiseField.from_analytic_gradient(get_function(name), MESH)
    assert maximal_value(f, z) == pytest.approx(maximal_oracle(f, z, n_radii=400), rel=0.02)


def test_fe_field_agrees_with_oracle():
    fh = ritz_project(FeSpace(MESH, 1), get_function("sing02"))
    f = PiecewiseField.from_fe_gradient(fh)
    z = (0.33, 0.66)
    assert maximal_value(f, z) == pytest.approx(maximal_oracle(f, z, n_radii=300, n_theta=128, n_rho=32), rel=0.02)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.1, 10.0))
def test_homogeneity_and_sublinearity(x, y, c):
    f = PiecewiseField.from_analytic_gradient(get_function("sine"), MESH)
    g = PiecewiseField.from_analytic_gradient(get_function("bubble"), MESH)
    z = (x, y)
    mf, mg = maximal_value(f, z), maximal_value(g, z)
    assert maximal_value(f * c, z) == pytest.approx(c * mf, rel=1e-9)
    assert maximal_value(f + g, z) <= (mf + mg) * (1 + 5e-3)


def test_zero_field():
    f = PiecewiseField.from_callable(lambda p: np.zeros(p.shape[:-1]), MESH)
    assert maximal_value(f, (0.5, 0.5)) == 0.0
