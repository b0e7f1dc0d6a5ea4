import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcontinuum import geometry as geo
from microcontinuum.errors import CFLViolation, VoidFractionOutOfRange
from microcontinuum.harness.manufacture import manufacture_voids
from microcontinuum.kinematics import SCALAR, MotionState, ReferenceBody, motion_family, spatial_fields
from microcontinuum.voids import (VoidState, VoidsConfig, drift_study, residual_equilibrated_inertia,
                                  residual_equilibrated_momentum, residual_scalar_doyle_ericksen,
                                  simulate_voids_bar, void_gradient)

from oracles import voids_frequency


def void_state(micro, motion=None, kappa=0.5, n_levels=3, **kw):
    grid = geo.Grid((0.0, 0.0), (0.125, 0.125), (9, 9))
    body = ReferenceBody(geo.euclidean(2), grid, 1.0)
    m = MotionState.sample(body, geo.euclidean(2), motion or motion_family("identity"), n_levels=n_levels,
                           dt=1e-2, micro=micro, micro_chart=SCALAR)
    return VoidState(m, matrix_density=1.0, kappa=kappa, **kw)


def test_void_gradient_examples():
    vs = void_state(lambda X, t: np.full(X.shape[:-1], 0.7))
    assert np.array_equal(void_gradient(vs.motion, node=(4, 4)), [0.0, 0.0])
    vs = void_state(lambda X, t: 0.1 + 0.5 * X[..., 0])
    assert np.allclose(void_gradient(vs.motion, node=(4, 4)), [0.5, 0.0], atol=1e-14)
    vs = void_state(lambda X, t: 0.1 + 0.5 * X[..., 0], motion_family("stretch", {"lambda": 2.0}))
    assert np.allclose(void_gradient(vs.motion, node=(4, 4)), [0.25, 0.0], atol=1e-14)


def test_trivial_residuals():
    vs = void_state(lambda X, t: np.full(X.shape[:-1], 0.7))
    f = spatial_fields(vs.motion)
    assert abs(residual_equilibrated_momentum(vs, f)[f.interior]).max() == 0.0
    from microcontinuum.constitutive import voids_quadratic
    assert abs(residual_scalar_doyle_ericksen(vs, f, voids_quadratic())).max() == 0.0
    # free oscillation of ν with b̃ = ã and no stress
    nu = lambda X, t: 0.7 + 0.01 * np.cos(3.0 * t) + 0.0 * X[..., 0]
    vs = void_state(nu)
    vs = VoidState(vs.motion, 1.0, 0.5, b_micro=vs.motion.micro_ddot)
    f = spatial_fields(vs.motion)
    assert abs(residual_equilibrated_momentum(vs, f)).max() == 0.0


def test_equilibrated_inertia_residual():
    vs = void_state(lambda X, t: np.full(X.shape[:-1], 0.7), kappa=np.stack([np.full((9, 9), t) for t in
                                                                            (-1e-2, 0.0, 1e-2)]) + 1.0)
    f = spatial_fields(vs.motion)
    assert np.allclose(residual_equilibrated_inertia(vs, f), 1.0)


def test_manufactured_voids_state():
    m = manufacture_voids(0)
    vs, f = m.extras["void_state"], m.fields
    inner = f.interior
    assert abs(residual_equilibrated_momentum(vs, f)[inner]).max() < 1e-8
    assert abs(residual_scalar_doyle_ericksen(vs, f, m.model)[inner]).max() < 1e-7
    assert abs(residual_equilibrated_inertia(vs, f)).max() == 0.0
    # kinetic-consistent form differs by ρ(1 − κ)ã
    diff = residual_equilibrated_momentum(vs, f, "kinetic-consistent") - residual_equilibrated_momentum(vs, f)
    expect = f.rho * (1 - vs.kappa[1]) * vs.motion.micro_ddot
    assert np.allclose(diff, expect, atol=1e-12)


def test_volume_fraction_range_enforced():
    with pytest.raises(VoidFractionOutOfRange):
        void_state(lambda X, t: np.full(X.shape[:-1], 1.2))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.05, 1.0))
def test_reference_density_is_factored(rho_bar, nu0):
    vs = void_state(lambda X, t: np.full(X.shape[:-1], nu0))
    vs = VoidState(vs.motion, rho_bar, 0.5)
    assert np.array_equal(vs.reference_density, rho_bar * vs.volume_fraction0)


def test_rest_state_stays_fixed():
    cfg = VoidsConfig(n_nodes=65, steps=1000, initial={"family": "rest"})
    r = simulate_voids_bar(cfg)
    assert abs(r.u).max() < 1e-12 and abs(r.nu - cfg.nu_ref).max() < 1e-12
    assert abs(r.energy - r.energy[0]).max() <= 1e-12


@pytest.mark.parametrize("form", ["printed", "kinetic-consistent"])
def test_uniform_oscillation_frequency(form):
    cfg = VoidsConfig(n_nodes=33, cnu=64.0, kappa=0.5, inertia_form=form, steps=3000)
    r = simulate_voids_bar(cfg)
    kappa = cfg.kappa if form == "kinetic-consistent" else 1.0
    oracle = voids_frequency(cfg.cnu, cfg.rho0, kappa)
    assert abs(r.measured_frequency() - oracle) <= 0.02 * oracle
    assert np.isclose(cfg.oracle_frequency(), oracle)


def test_cfl_violation():
    cfg = VoidsConfig(n_nodes=33, dt=1.0, steps=2)
    with pytest.raises(CFLViolation):
        simulate_voids_bar(cfg)


def test_blow_up_halts_with_partial_report():
    cfg = VoidsConfig(n_nodes=17, cnu=64.0, steps=2000, initial={"family": "uniform", "amplitude": 0.5})
    with pytest.raises(VoidFractionOutOfRange) as info:
        simulate_voids_bar(cfg)
    part = info.value.partial
    assert part.halted and len(part.times) >= 1


def test_doyle_ericksen_diagnostic_bounded_and_negative_control():
    cfg = VoidsConfig(n_nodes=33, cg=0.01, beta=0.3, steps=400,
                      initial={"family": "cosine", "amplitude": 1e-2})
    r = simulate_voids_bar(cfg)
    assert r.de_residual.max() <= 10 * max(r.de_residual[0], 1e-12)
    bad = simulate_voids_bar(cfg, closure_scale=1.01)
    assert bad.de_residual.max() > 1e-8


def test_drift_is_second_order():
    cfg = VoidsConfig(n_nodes=33, cnu=8.0, beta=0.5, steps=200, dt_fraction=0.4,
                      initial={"family": "cosine", "amplitude": 1e-2})
    study = drift_study(cfg, 3)
    assert min(study["ratios"]) >= 3.5


def test_config_round_trip():
    cfg = VoidsConfig(n_nodes=17, dt=1e-3)
    assert VoidsConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        VoidsConfig(inertia_form="other").kappa_eff
