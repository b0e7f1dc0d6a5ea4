import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcontinuum import geometry as geo
from microcontinuum.errors import PointOutsideChart, SingularMetric, ValenceMismatch

from oracles import CHART_POINTS, GENERATORS, SymbolicField, lie_connection_oracle, lie_metric_oracle

CHARTS = {"flat": geo.euclidean(2), "polar": geo.polar(), "sphere": geo.sphere(1.0)}


def vector_field(fn, chart=None):
    return geo.TensorField((1, 0), fn, chart)


def test_grid_nodes_and_gradient_exact_for_quadratics():
    grid = geo.Grid((0.0, -1.0), (0.25, 0.5), (5, 5))
    X = grid.nodes()
    assert X.shape == (5, 5, 2)
    f = X[..., 0] ** 2 + 3 * X[..., 0] * X[..., 1]
    df = grid.gradient(f)
    inner = grid.interior_mask()
    assert np.allclose(df[inner][:, 0], (2 * X[..., 0] + 3 * X[..., 1])[inner], atol=1e-13)
    assert np.allclose(df[inner][:, 1], (3 * X[..., 0])[inner], atol=1e-13)


def test_polar_christoffels_closed_form():
    x = np.array([[1.3, 0.4], [0.7, -2.0]])
    gam = geo.christoffel(geo.polar(), x)
    r = x[:, 0]
    assert np.allclose(gam[:, 0, 1, 1], -r, atol=1e-9)
    assert np.allclose(gam[:, 1, 0, 1], 1 / r, atol=1e-9)
    assert np.allclose(gam[:, 1, 1, 0], 1 / r, atol=1e-9)
    assert abs(gam[:, 0, 0, 0]).max() < 1e-9


def test_euclidean_is_flat_and_sphere_has_unit_curvature():
    x = np.array([[0.4, 0.1], [1.0, 2.0]])
    R = geo.curvature(geo.levi_civita(geo.euclidean(2)), x)
    assert abs(R).max() == 0.0
    assert np.allclose(geo.gaussian_curvature(geo.sphere(1.0), CHART_POINTS["sphere"]), 1.0, atol=1e-6)
    assert np.allclose(geo.gaussian_curvature(geo.sphere(2.0), CHART_POINTS["sphere"]), 0.25, atol=1e-6)
    # polar coordinates describe the flat plane
    assert abs(geo.gaussian_curvature(geo.polar(), CHART_POINTS["polar"])).max() < 1e-6


def test_curvature_antisymmetric_in_last_pair():
    R = geo.curvature(geo.levi_civita(geo.sphere()), CHART_POINTS["sphere"])
    assert np.allclose(R, -np.swapaxes(R, -1, -2), atol=1e-12)


def test_divergence_of_position_field_is_dimension():
    for n in (1, 2, 3):
        chart = geo.euclidean(n)
        x = np.random.default_rng(n).standard_normal((4, n))
        div = geo.divergence(vector_field(lambda p: p, chart), chart, x)
        assert np.allclose(div, n, atol=1e-9)


def test_divergence_in_polar_of_radial_field():
    # w = r ∂_r has divergence (1/r) ∂_r (r · r) = 2
    chart = geo.polar()
    w = vector_field(lambda p: np.stack([p[..., 0], np.zeros_like(p[..., 0])], -1), chart)
    assert np.allclose(geo.divergence(w, chart, CHART_POINTS["polar"]), 2.0, atol=1e-8)


@pytest.mark.parametrize("chart_name", list(CHARTS))
@pytest.mark.parametrize("field_name", list(GENERATORS))
def test_lie_derivatives_match_flow_pullback(chart_name, field_name):
    chart = CHARTS[chart_name]
    pts = CHART_POINTS[chart_name]
    w = vector_field(SymbolicField(field_name).numpy_field(), chart)
    Lg = geo.lie_derivative_metric(w, chart, pts)
    Lc = geo.lie_derivative_connection(w, geo.levi_civita(chart), chart, pts)
    og = np.array([lie_metric_oracle(chart_name, field_name, x) for x in pts])
    oc = np.array([lie_connection_oracle(chart_name, field_name, x) for x in pts])
    assert np.abs(Lg - og).max() <= 1e-6 * np.abs(og).max()
    assert np.abs(Lc - oc).max() <= 1e-6 * np.abs(oc).max()


def test_killing_field_on_sphere():
    # rotation about the polar axis is an isometry
    chart = geo.sphere()
    w = vector_field(lambda p: np.stack([np.zeros_like(p[..., 0]), np.ones_like(p[..., 0])], -1), chart)
    pts = CHART_POINTS["sphere"]
    assert abs(geo.lie_derivative_metric(w, chart, pts)).max() < 1e-9
    assert abs(geo.lie_derivative_connection(w, geo.levi_civita(chart), chart, pts)).max() < 1e-6


def test_chart_errors():
    with pytest.raises(PointOutsideChart):
        geo.polar().metric_at(np.array([-1.0, 0.0]))
    with pytest.raises(PointOutsideChart):
        geo.euclidean(2).metric_at(np.array([1.0, 2.0, 3.0]))
    bad = geo.MetricChart(2, lambda x: np.broadcast_to(np.diag([1.0, -1.0]), np.shape(x)[:-1] + (2, 2)))
    with pytest.raises(SingularMetric):
        bad.metric_at(np.zeros(2))
    chart = geo.euclidean(2)
    w = geo.TensorField((1, 1), lambda p: p, chart)
    with pytest.raises(ValenceMismatch):
        geo.covariant_derivative(w, geo.levi_civita(chart), np.zeros((1, 2)))


def test_grid_sampled_chart_reproduces_constant_metric():
    grid = geo.Grid((0.0, 0.0), (0.1, 0.1), (11, 11))
    M = np.array([[2.0, 0.3], [0.3, 1.0]])
    chart = geo.grid_sampled(grid, np.broadcast_to(M, grid.shape + (2, 2)))
    x = np.array([[0.33, 0.41], [0.5, 0.5]])
    assert np.allclose(chart.metric_at(x), M)
    assert abs(geo.christoffel(chart, x)).max() < 1e-12
    with pytest.raises(PointOutsideChart):
        chart.metric_at(np.array([1.5, 0.2]))


coeff = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(st.lists(coeff, min_size=6, max_size=6), st.floats(-2.0, 2.0))
def test_lie_derivative_of_metric_is_symmetric_and_linear(c, lam):
    chart = geo.sphere()
    pts = CHART_POINTS["sphere"]
    A = np.array(c[:4]).reshape(2, 2)
    b = np.array(c[4:])
    w1 = vector_field(lambda p: p @ A.T + b, chart)
    w2 = vector_field(lambda p: np.sin(p) * b, chart)
    wsum = vector_field(lambda p: p @ A.T + b + lam * np.sin(p) * b, chart)
    L1 = geo.lie_derivative_metric(w1, chart, pts)
    L2 = geo.lie_derivative_metric(w2, chart, pts)
    Ls = geo.lie_derivative_metric(wsum, chart, pts)
    assert np.allclose(L1, np.swapaxes(L1, -1, -2), atol=1e-12)
    assert np.allclose(Ls, L1 + lam * L2, atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2), st.floats(0.2, 1.0))
def test_constant_metric_has_no_christoffels(x, s):
    chart = geo.constant_metric([[1.0 + s, 0.2], [0.2, 1.0]])
    assert abs(geo.christoffel(chart, np.array(x))).max() < 1e-9
