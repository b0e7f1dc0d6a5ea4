import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcontinuum import constitutive as con
from microcontinuum import geometry as geo
from microcontinuum.harness.manufacture import manufacture_mixture
from microcontinuum.kinematics import MotionState, ReferenceBody, motion_family
from microcontinuum.mixtures import (MIXTURE_LAWS, Constituent, MixtureState, coupled_doyle_ericksen,
                                     mixture_args, mixture_balance_report, swap, swap_models, total_energy)


@pytest.fixture(scope="module")
def mix():
    m = manufacture_mixture(0)
    return m.extras["mixture"], m.model


def test_constructed_state_passes_all_laws(mix):
    state, models = mix
    rep = mixture_balance_report(state, models)
    assert rep.names == list(MIXTURE_LAWS)
    assert rep.passed, rep.failures
    assert rep["doyle_ericksen_1"].linf < 1e-7 and rep["doyle_ericksen_2"].linf < 1e-7


def test_stress_of_one_constituent_depends_on_the_other_metric(mix):
    # the coupling term makes σ₁ see g₂: dropping e₂ leaves a defect
    state, (m1, m2) = mix
    zero = con.EnergyModel("mixture", lambda a: np.zeros(np.shape(a["g1"])[:-2]), name="zero")
    d1, _ = coupled_doyle_ericksen(state, (m1, zero))
    assert abs(d1[state.fields(1).interior]).max() > 1e-3


def test_relabeling_symmetry_is_exact(mix):
    state, models = mix
    d1, d2 = coupled_doyle_ericksen(state, models)
    s1, s2 = coupled_doyle_ericksen(swap(state), swap_models(models))
    assert np.array_equal(d1, s2) and np.array_equal(d2, s1)
    rep = mixture_balance_report(state, models)
    back = mixture_balance_report(swap(state), swap_models(models))
    for i, j in ((1, 2), (2, 1)):
        for law in ("mass", "momentum", "doyle_ericksen", "angular"):
            assert rep[f"{law}_{i}"].linf == back[f"{law}_{j}"].linf


def test_total_energy_adds(mix):
    state, (m1, m2) = mix
    a = mixture_args(state)
    assert np.array_equal(total_energy((m1, m2)).evaluate(a), m1.evaluate(a) + m2.evaluate(a))


def test_violation_named(mix):
    state, models = mix
    c1, c2 = state.constituents
    bad = Constituent(c1.state, c1.stress, c1.loads.replace(b=c1.loads.b + 1e-3))
    rep = mixture_balance_report(MixtureState((bad, c2), state.volume_fractions), models)
    assert rep.failures == ["momentum_1"]


def test_total_density(mix):
    state, _ = mix
    nu1, nu2 = state.volume_fractions
    assert np.allclose(state.total_density(), nu1 * state.fields(1).rho + nu2 * state.fields(2).rho)


def test_constituents_must_share_positions(mix):
    state, _ = mix
    c1, c2 = state.constituents
    moved = MotionState(c2.state.body, c2.state.ambient, c2.state.phi + 1e-3, dt=c2.state.dt)
    with pytest.raises(ValueError):
        MixtureState((c1, Constituent(moved, c2.stress, c2.loads)))
    with pytest.raises(ValueError):
        MixtureState((c1, c2), (np.full(c1.state.body.grid.shape, 0.5), np.full(c1.state.body.grid.shape, 0.6)))
    with pytest.raises(ValueError):
        MixtureState((c1,))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_manufactured_mixtures_hold_for_any_seed(seed):
    m = manufacture_mixture(seed, n=9)
    rep = mixture_balance_report(m.extras["mixture"], m.model)
    assert rep.passed, rep.failures
