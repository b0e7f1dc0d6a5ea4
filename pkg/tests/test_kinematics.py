import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcontinuum import geometry as geo
from microcontinuum.errors import BoundaryNode, DegenerateF, MissingTimeLevel, NonInjectiveMotion
from microcontinuum.kinematics import (SCALAR, TANGENT, MotionState, ReferenceBody, deformation_gradient,
                                       jacobian, level_rate, level_second_rate, micro_deformation_gradient,
                                       motion_family, pullback_metric, scs_micro_velocity, spatial_fields)


def body(dim=2, n=9, rho0=1.0, chart=None, lo=0.0):
    grid = geo.Grid((lo,) * dim, (1.0 / (n - 1),) * dim, (n,) * dim)
    return ReferenceBody(chart or geo.euclidean(dim), grid, rho0)


def test_identity_motion():
    b = body()
    s = MotionState.sample(b, geo.euclidean(2), motion_family("identity"), n_levels=1)
    F = deformation_gradient(s, node=(3, 4))
    assert np.array_equal(F, np.eye(2))
    assert jacobian(s, node=(3, 4)) == 1.0


def test_stretch_and_shear_gradients_are_exact():
    b = body()
    s = MotionState.sample(b, geo.euclidean(2), motion_family("stretch", {"lambda": [2.0, 0.5]}), n_levels=1)
    assert np.allclose(deformation_gradient(s, node=(2, 2)), np.diag([2.0, 0.5]), atol=1e-14)
    assert np.isclose(jacobian(s, node=(2, 2)), 1.0)
    s = MotionState.sample(b, geo.euclidean(2), motion_family("shear", {"gamma": 0.3}), n_levels=1)
    assert np.allclose(deformation_gradient(s, node=(2, 2)), [[1.0, 0.3], [0.0, 1.0]], atol=1e-14)
    C = pullback_metric(s, node=(2, 2))
    assert np.allclose(C, [[1.0, 0.3], [0.3, 1.09]], atol=1e-14)


def test_jacobian_includes_metric_volume_factor():
    # identity map from flat (r, θ) coordinates into polar chart: J = r
    b = body(lo=0.5)
    s = MotionState.sample(b, geo.polar(), motion_family("identity"), n_levels=1)
    X = b.nodes
    assert np.allclose(jacobian(s)[b.grid.interior_mask()], X[..., 0][b.grid.interior_mask()])


def test_velocity_and_acceleration_of_polynomial_motion():
    coeffs = {"u1": {"b": [0.2, -0.1]}, "u2": {"A": [[0.0, 0.3], [0.1, 0.0]]}}
    b = body()
    s = MotionState.sample(b, geo.euclidean(2), motion_family("polynomial", coeffs), t0=0.5, dt=1e-3)
    f = spatial_fields(s)
    X = b.nodes
    A = np.array([[0.0, 0.3], [0.1, 0.0]])
    assert np.allclose(f.v, 0.2 * np.array([1, 0]) + np.array([0, -0.1]) + 0.5 * X @ A.T, atol=1e-10)
    assert np.allclose(f.a, X @ A.T, atol=1e-6)


def test_rigid_rotation_preserves_metric_and_density():
    b = body(rho0=2.0)
    s = MotionState.sample(b, geo.euclidean(2), motion_family("rigid_rotation", {"omega": 0.7}), t0=0.3)
    f = spatial_fields(s)
    inner = b.grid.interior_mask()
    assert np.allclose(f.C[inner], np.eye(2), atol=1e-12)
    assert np.allclose(f.rho[inner], 2.0, atol=1e-12)
    # rigid motion: v = W x so the symmetric velocity gradient vanishes
    L = f.grad(f.v)
    assert np.allclose((L + np.swapaxes(L, -1, -2))[inner], 0.0, atol=1e-8)


def test_level_rates():
    lv = np.array([1.0, 2.0, 5.0])
    assert level_rate(lv, 0.5) == 4.0
    assert level_second_rate(lv, 0.5) == 8.0
    with pytest.raises(MissingTimeLevel):
        level_rate(lv[:1], 0.5)
    with pytest.raises(MissingTimeLevel):
        level_second_rate(lv[:2], 0.5)


def test_free_director_gradients():
    b = body()
    B = np.array([[1.0, 0.2], [-0.1, 0.8]])
    s = MotionState.sample(b, geo.euclidean(2), motion_family("stretch", {"lambda": 2.0}), n_levels=1,
                           micro=lambda X, t: X @ B.T + 1.0, micro_chart=geo.euclidean(2))
    assert np.allclose(micro_deformation_gradient(s, node=(3, 3)), B, atol=1e-13)
    f = spatial_fields(s)
    # F0 = F̃ F⁻¹
    assert np.allclose(f.F0[3, 3], B @ np.diag([0.5, 1.0]), atol=1e-13)


def test_scalar_director_gradient_is_covector():
    b = body()
    s = MotionState.sample(b, geo.euclidean(2), motion_family("identity"), n_levels=1,
                           micro=lambda X, t: 0.5 + 0.1 * X[..., 0], micro_chart=SCALAR)
    assert np.allclose(micro_deformation_gradient(s, node=(4, 4)), [0.1, 0.0])


def test_tangent_director_velocity_includes_connection():
    b = body(lo=0.5)
    motion = lambda X, t: X + t * np.array([0.1, 0.0])
    micro = lambda X, t: np.broadcast_to([0.0, 1.0], X.shape).copy()
    s = MotionState.sample(b, geo.polar(), motion, micro=micro, micro_chart=TANGENT)
    vt = scs_micro_velocity(s)
    r = s.phi_now[..., 0]
    # Γ^θ_{rθ} v^r p^θ = 0.1 / r
    assert np.allclose(vt[..., 1][b.grid.interior_mask()], (0.1 / r)[b.grid.interior_mask()], atol=1e-8)


def test_errors():
    b = body()
    s = MotionState.sample(b, geo.euclidean(2), motion_family("stretch", {"lambda": -1.0}), n_levels=1)
    with pytest.raises(DegenerateF):
        deformation_gradient(s)
    s = MotionState.sample(b, geo.euclidean(2), motion_family("identity"), n_levels=1)
    with pytest.raises(BoundaryNode):
        deformation_gradient(s, node=(0, 3))
    s = MotionState.sample(b, geo.euclidean(2), lambda X, t: np.zeros_like(X) + 0.0 * X, n_levels=1)
    with pytest.raises((NonInjectiveMotion, DegenerateF)):
        spatial_fields(s)
    s = MotionState.sample(b, geo.euclidean(2), motion_family("identity"), n_levels=1)
    with pytest.raises(MissingTimeLevel):
        s.phi_ddot


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=4, max_size=4), st.floats(0.5, 2.0))
def test_affine_motion_properties(a, rho0):
    A = np.eye(2) + np.array(a).reshape(2, 2)
    if np.linalg.det(A) < 0.2:
        return
    b = body(rho0=rho0)
    s = MotionState.sample(b, geo.euclidean(2), lambda X, t: X @ A.T, n_levels=1)
    f = spatial_fields(s)
    inner = b.grid.interior_mask()
    assert np.allclose(f.F[inner], A, atol=1e-12)
    assert np.allclose(f.J[inner], np.linalg.det(A), atol=1e-12)
    # mass per reference volume is conserved: ρ J = ρ₀
    assert np.allclose((f.rho * f.J)[inner], rho0, atol=1e-12)
    assert np.allclose(f.C[inner], A.T @ A, atol=1e-12)
