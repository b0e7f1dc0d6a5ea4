from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcontinuum import constitutive as con
from microcontinuum import covariance as cov
from microcontinuum.covariance.quadrature import SubBody, flux_integral, volume_integral
from microcontinuum.covariance.report import BalanceReport, law, skew_from
from microcontinuum.covariance.scs import residual_scs_linear_momentum
from microcontinuum.errors import NonEuclideanChart
from microcontinuum.harness import manufacture as mf


@pytest.fixture(scope="module")
def free2():
    return mf.manufacture_free(0, dim=2, n=17)


def poly_flow(seed, dim=2, degree=2, scale=0.3):
    rng = np.random.default_rng(seed)
    return cov.general_spatial(cov.polynomial_field(cov.random_polynomial_coeffs(rng, dim, degree, scale)))


def injection_quadrature(fields, delta, w):
    """Midpoint-box sum of ρ⟨δ, w⟩_g J sqrt(det G) over interior nodes, written out by hand."""
    inner = fields.grid.interior_mask()
    dens = fields.rho * np.einsum("...a,...ab,...b->...", delta, fields.g, w)
    vol = fields.J * np.sqrt(np.linalg.det(fields.G)) * np.prod(fields.grid.spacing)
    return float(np.sum((dens * vol)[inner]))


@pytest.mark.parametrize("dim,n", [(2, 17), (3, 9)])
def test_manufactured_free_state_satisfies_every_law(dim, n):
    m = mf.manufacture_free(3, dim=dim, n=n)
    rep = cov.free_balance_report(m.stress, m.fields, m.loads, m.model, {k: 1e-9 for k in
                                                                         ("mass", "linear_momentum")})
    assert rep.passed, rep.failures
    for r in rep.laws:
        assert r.linf < 1e-9


def test_violations_are_named(free2):
    m = free2
    loads = m.loads.replace(b=m.loads.b + 1e-3)
    rep = cov.free_balance_report(m.stress, m.fields, loads, m.model)
    assert rep.failures == ["linear_momentum"]
    sig = m.stress.cauchy + con.skew(1e-3 * np.triu(np.ones_like(m.stress.cauchy)))
    rep = cov.free_balance_report(m.stress.replace(cauchy=sig), m.fields, m.loads, m.model)
    assert "angular_momentum" in rep.failures and "doyle_ericksen" in rep.failures


def test_spatial_covariance_collapses_for_polynomial_flows(free2):
    for seed in range(10):
        r = cov.spatial_covariance_experiment(free2.fields, free2.stress, free2.loads, free2.model, poly_flow(seed))
        assert abs(r["total"].linf) < 1e-7


def test_injection_shifts_total_by_its_quadrature(free2):
    m = free2
    delta = np.array([1e-3, -2e-3])
    loads = m.loads.replace(b=m.loads.b + delta)
    for seed in range(3):
        flow = poly_flow(seed)
        base = cov.spatial_covariance_experiment(m.fields, m.stress, m.loads, m.model, flow).extras["total"]
        hit = cov.spatial_covariance_experiment(m.fields, m.stress, loads, m.model, flow).extras["total"]
        expected = -injection_quadrature(m.fields, np.broadcast_to(delta, m.fields.x.shape), flow.w(m.fields.x))
        assert abs((hit - base) - expected) <= 0.02 * abs(expected)


def test_micro_covariance_collapses(free2):
    rng = np.random.default_rng(5)
    for _ in range(3):
        flow = cov.micro_flow(cov.polynomial_field(cov.random_polynomial_coeffs(rng, 2, 2, 0.3)))
        r = cov.micro_covariance_experiment(free2.fields, free2.stress, free2.loads, free2.model, flow)
        assert abs(r["total"].linf) < 1e-7


def test_divergence_theorem_of_box_quadrature(free2):
    f = free2.fields
    box = SubBody.interior(f.grid, 2)
    sig = f.state.body.density0[..., None, None] * np.eye(2)
    # ∮ P·N = ∫ Div P over the reference box for any nodal field P with central differences
    P = np.einsum("...ab,...Ab->...aA", sig, f.Finv) * f.J[..., None, None]
    flux = flux_integral(f.grid, P, box)
    div = np.einsum("...aAA->...a", f.grid.gradient(P))
    vol = div[box.slices()].reshape(-1, 2).sum(axis=0) * f.grid.cell_volume
    assert np.allclose(flux, vol, atol=1e-13)


def test_gnr_rigid_flows():
    m = mf.manufacture_gnr(0)
    for flow in (cov.rigid_translation([1.0, -0.5, 0.2]), cov.rigid_rotation(skew_from(np.arange(9.0).reshape(3, 3)))):
        r = cov.gnr_experiment(m.fields, m.stress, m.loads, flow)
        assert abs(r.defect) < 1e-10 * max(1.0, abs(r.supplied))


def test_gnr_cannot_see_micro_momentum_violation():
    m = mf.manufacture_gnr(1)
    f = m.fields
    lam = 0.5 + 0.2 * f.x[..., 0]
    bad_loads = m.loads.replace(b_micro=m.loads.b_micro + 1e-2 * lam[..., None] * f.p)
    before = cov.residual_micro_linear_momentum(m.stress, f, m.loads)
    after = cov.residual_micro_linear_momentum(m.stress, f, bad_loads)
    assert abs(after - before)[f.interior].max() > 1e-3
    om = skew_from(np.random.default_rng(2).standard_normal((3, 3)))
    for flow in (cov.rigid_translation([0.3, 0.1, -0.2]), cov.rigid_rotation(om)):
        d0 = cov.gnr_experiment(f, m.stress, m.loads, flow).defect
        d1 = cov.gnr_experiment(f, m.stress, bad_loads, flow).defect
        assert abs(d1 - d0) < 1e-10


def test_gnr_needs_flat_chart():
    m = mf.manufacture_scs(0)
    with pytest.raises(NonEuclideanChart):
        cov.gnr_experiment(m.fields, m.stress, m.loads, cov.rigid_translation([1.0, 0.0]))


def test_scs_curvature_term_is_material():
    m = mf.manufacture_scs(0)
    full = residual_scs_linear_momentum(m.stress, m.fields, m.loads, m.model)
    raw = residual_scs_linear_momentum(m.stress, m.fields, m.loads, m.model, form="raw")
    dropped = residual_scs_linear_momentum(m.stress, m.fields, m.loads, m.model, include_curvature=False)
    inner = m.fields.interior
    assert abs(full[inner]).max() < 1e-7
    assert abs(raw[inner]).max() < 1e-7
    assert abs(dropped[inner]).max() >= 1e-3
    rep = cov.scs_balance_report(m.stress, m.fields, m.loads, m.model)
    assert rep.passed, rep.failures


def test_scs_flat_chart_has_no_curvature_force():
    m = mf.manufacture_scs(0, chart="euclidean")
    dropped = residual_scs_linear_momentum(m.stress, m.fields, m.loads, m.model, include_curvature=False)
    assert abs(dropped[m.fields.interior]).max() < 1e-7


def test_generalized_covariance_report():
    m = mf.manufacture_generalized(0)
    rep = cov.generalized_report(m.stress, m.fields, m.loads, m.model)
    assert rep.passed, rep.failures


def test_material_covariance_conditions():
    m = mf.manufacture_material(0)
    rep = cov.material_covariance_conditions(m.fields, m.stress, m.model)
    assert rep.passed, rep.failures
    wrong = con.material_linear(m.extras["A"] + m.extras["B"] + 1e-3 * np.eye(2), m.state.body.density0)
    rep = cov.material_covariance_conditions(m.fields, m.stress, wrong)
    assert rep.failures == ["material_stress"]


def test_report_round_trip():
    rep = BalanceReport((law("a", np.ones(3) * 1e-9), law("b", 2.0, tol=1.0)))
    back = BalanceReport.from_dict(rep.to_dict())
    assert back.names == rep.names and back.passed == rep.passed and back["a"].linf == rep["a"].linf
    with pytest.raises(ValueError):
        BalanceReport((law("a", 0.0), law("a", 0.0)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_manufacture_is_deterministic_and_consistent(seed):
    a = mf.manufacture_free(seed, n=9)
    b = mf.manufacture_free(seed, n=9)
    assert np.array_equal(a.loads.b, b.loads.b) and np.array_equal(a.stress.cauchy, b.stress.cauchy)
    rep = cov.free_balance_report(a.stress, a.fields, a.loads, a.model)
    assert all(r.linf < 1e-9 for r in rep.laws)
