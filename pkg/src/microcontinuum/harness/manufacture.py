"""Manufactured states: fields chosen freely, loads solved from the balance laws.

Every generator is deterministic in ``seed``. Densities are stored as explicit
time levels ``ρ_c (1 ± dt div v)`` around the current value ``ρ_c = ρ₀/J`` so
that the discrete continuity residual vanishes to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import constitutive as con
from .. import geometry as geo
from ..covariance.free import velocity_divergence
from ..covariance.report import BodyLoads
from ..covariance.scs import curvature_force, micro_director_force, scs_tensor
from ..kinematics import TANGENT, MotionState, ReferenceBody, motion_family, spatial_fields


@dataclass(frozen=True)
class Manufactured:
    regime: str
    state: MotionState
    fields: object
    stress: con.StressState
    loads: BodyLoads
    model: object
    extras: dict = field(default_factory=dict)


# =============================================================================
# Random smooth fields
# =============================================================================

def random_poly(rng: np.random.Generator, X: np.ndarray, comp_shape: tuple = (), scale: float = 1.0,
                degree: int = 2) -> np.ndarray:
    """Nodal polynomial field of the given degree with random coefficients."""
    n = X.shape[-1]
    out = np.broadcast_to(scale * rng.standard_normal(comp_shape), X.shape[:-1] + comp_shape).copy()
    if degree >= 1:
        c1 = scale * rng.standard_normal(comp_shape + (n,))
        out = out + np.einsum("...A,...A->...", c1, X[(...,) + (None,) * len(comp_shape) + (slice(None),)])
    if degree >= 2:
        c2 = scale * rng.standard_normal(comp_shape + (n, n))
        Xe = X[(...,) + (None,) * len(comp_shape) + (slice(None),)]
        out = out + np.einsum("...AB,...A,...B->...", c2, Xe, Xe)
    return out


def unit_grid(dim: int, n: int, lo: float = 0.0, hi: float = 1.0) -> geo.Grid:
    h = (hi - lo) / (n - 1)
    return geo.Grid(origin=(lo,) * dim, spacing=(h,) * dim, shape=(n,) * dim)


def _poly_motion_coeffs(rng, dim, scale):
    def block():
        return {"b": scale * rng.standard_normal(dim), "A": scale * rng.standard_normal((dim, dim)),
                "B": scale * rng.standard_normal((dim, dim, dim))}
    return {"u0": block(), "u1": block(), "u2": block()}


def _director(rng, dim, scale):
    """p(X, t) = X + p0(X) + t q(X) + ½ t² r(X) as a callable."""
    coeffs = _poly_motion_coeffs(rng, dim, scale)
    return motion_family("polynomial", coeffs)


def with_consistent_density(state: MotionState) -> MotionState:
    """Replace density levels by ρ_c (1 ∓ dt div v) so continuity holds exactly."""
    f0 = spatial_fields(state)
    rho_c = state.body.density0 / f0.J
    divv = velocity_divergence(f0)
    dt = state.dt
    if state.n_levels == 3:
        levels = np.stack([rho_c * (1 + dt * divv), rho_c, rho_c * (1 - dt * divv)])
    else:
        levels = np.stack([rho_c, rho_c * (1 - dt * divv)])
    return state.with_levels(density=levels)


def micro_metric_chart(rng: np.random.Generator, dim: int) -> geo.MetricChart:
    """Smooth non-constant SPD metric for a free director: g̃ = A + 0.1 p⊗p."""
    Q = rng.standard_normal((dim, dim))
    A = np.eye(dim) + 0.1 * Q @ Q.T

    def metric(p):
        p = np.asarray(p, dtype=float)
        return A + 0.1 * np.einsum("...a,...b->...ab", p, p)
    return geo.MetricChart(dim=dim, metric=metric, name="micro")


# =============================================================================
# Regimes
# =============================================================================

def manufacture_free(seed: int = 0, dim: int = 2, n: int = 17, dt: float = 1e-3,
                     model: Optional[con.EnergyModel] = None, scale: float = 0.05) -> Manufactured:
    rng = np.random.default_rng(seed)
    grid = unit_grid(dim, n)
    X = grid.nodes()
    body = ReferenceBody(geo.euclidean(dim), grid, 1.0 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)),
                         micro_inertia0=0.5)
    motion = motion_family("polynomial", _poly_motion_coeffs(rng, dim, scale))
    micro = _director(rng, dim, scale)
    state = MotionState.sample(body, geo.euclidean(dim), motion, t0=0.0, dt=dt, n_levels=3,
                               micro=micro, micro_chart=micro_metric_chart(rng, dim))
    state = with_consistent_density(state)
    fields = spatial_fields(state)
    model = model or con.quadratic_free()
    stress = con.doyle_ericksen_stress(model, fields)
    micro_stress, _ = con.micro_doyle_ericksen_stress(model, fields)
    stress = stress.replace(micro_cauchy=micro_stress.micro_cauchy)
    rho = fields.rho
    b = fields.a - fields.div(stress.cauchy, (2, 0)) / rho[..., None]
    bm = fields.j[..., None] * fields.a_micro - fields.micro_div(stress.micro_cauchy) / rho[..., None]
    return Manufactured("free", state, fields, stress, BodyLoads(b=b, b_micro=bm), model)


def _tangent_motion_state(body, ambient, motion, micro, dt, density_consistent=True):
    state = MotionState.sample(body, ambient, motion, t0=0.0, dt=dt, n_levels=3, micro=micro,
                               micro_chart=TANGENT)
    return with_consistent_density(state) if density_consistent else state


def manufacture_gnr(seed: int = 0, dim: int = 3, n: int = 13, dt: float = 1e-3,
                    scale: float = 0.2) -> Manufactured:
    """Flat state at the identity position with a symmetric rigid-rotation bracket.

    Stresses and the director are affine and the micro body force is uniform,
    so every product under a surface integral is at most bilinear and the
    central-difference divergence theorem holds to round-off.
    """
    rng = np.random.default_rng(seed)
    grid = unit_grid(dim, n, -0.5, 0.5)
    X = grid.nodes()
    body = ReferenceBody(geo.euclidean(dim), grid, 1.0 + 0.5 * rng.random())
    coeffs = _poly_motion_coeffs(rng, dim, scale)
    coeffs["u0"] = {}
    motion = motion_family("polynomial", coeffs)
    p0, q, r = (random_poly(rng, X, (dim,), scale, degree=1) for _ in range(3))
    micro = lambda X_, t: X_ + p0 + t * q + 0.5 * t * t * r
    state = _tangent_motion_state(body, geo.euclidean(dim), motion, micro, dt)
    fields = spatial_fields(state)
    sig_m = random_poly(rng, X, (dim, dim), scale, degree=1)
    bm = np.broadcast_to(scale * rng.standard_normal(dim), X.shape).copy()
    S = random_poly(rng, X, (dim, dim), scale, degree=1)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    rho = fields.rho
    extra = (np.einsum("...a,...b->...ab", fields.div(sig_m, (2, 0)) + rho[..., None] * bm, fields.p)
             + np.einsum("...ac,...bc->...ab", sig_m, fields.grad(fields.p)))
    sigma = S - con.skew(extra)
    b = fields.a - fields.div(sigma, (2, 0)) / rho[..., None]
    stress = con.StressState(cauchy=sigma, micro_cauchy=sig_m)
    return Manufactured("gnr", state, fields, stress, BodyLoads(b=b, b_micro=bm), None)


def _sphere_grid(n: int) -> geo.Grid:
    return geo.Grid(origin=(0.7, 0.2), spacing=(0.7 / (n - 1),) * 2, shape=(n, n))


def manufacture_scs(seed: int = 0, n: int = 17, dt: float = 1e-3, scale: float = 0.5,
                    chart: str = "sphere") -> Manufactured:
    """Static identity motion on a curved chart with a time-dependent director."""
    rng = np.random.default_rng(seed)
    ambient = geo.sphere(1.0) if chart == "sphere" else geo.euclidean(2)
    grid = _sphere_grid(n)
    X = grid.nodes()
    body = ReferenceBody(ambient, grid, 1.0 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)),
                         micro_inertia0=0.7)
    p0 = random_poly(rng, X, (2,), scale)
    q = random_poly(rng, X, (2,), scale)
    r = random_poly(rng, X, (2,), scale)
    micro = lambda X_, t: p0 + t * q + 0.5 * t * t * r
    state = MotionState.sample(body, ambient, motion_family("identity"), t0=0.0, dt=dt, n_levels=3,
                               micro=micro, micro_chart=TANGENT)
    fields = spatial_fields(state)
    sig_m = random_poly(rng, X, (2, 2), scale)
    bm = random_poly(rng, X, (2,), scale)
    return _close_scs(state, fields, sig_m, bm, "scs")


def _close_scs(state, fields, sig_m, bm, regime) -> Manufactured:
    rho = fields.rho
    loads = BodyLoads(b_micro=bm)
    probe_stress = con.StressState(cauchy=np.zeros_like(fields.g), micro_cauchy=sig_m)
    S = scs_tensor(probe_stress, fields)
    model = con.scs_linear(probe=S / rho[..., None, None, None])
    dedg = con.metric_derivative(model, con.scs_args(fields), "g")
    grad_p = fields.cov(fields.p, (1, 0))
    div_m = fields.div(sig_m, (2, 0))
    sigma = (2.0 * rho[..., None, None] * dedg
             - np.einsum("...a,...b->...ab", micro_director_force(fields, loads) + div_m, fields.p)
             - np.einsum("...ac,...bc->...ab", sig_m, grad_p))
    stress = con.StressState(cauchy=sigma, micro_cauchy=sig_m)
    b = fields.a + (curvature_force(S, fields) - fields.div(sigma, (2, 0))) / rho[..., None]
    return Manufactured(regime, state, fields, stress, loads.replace(b=b), model)


def manufacture_generalized(seed: int = 0, n: int = 17, dt: float = 1e-3, scale: float = 0.3) -> Manufactured:
    """Flat chart, director uniform in space, satisfying the separate micro balance."""
    rng = np.random.default_rng(seed)
    grid = unit_grid(2, n)
    X = grid.nodes()
    body = ReferenceBody(geo.euclidean(2), grid, 1.0 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)),
                         micro_inertia0=0.7)
    motion = motion_family("polynomial", _poly_motion_coeffs(rng, 2, 0.05))
    p0, q, r = (rng.standard_normal(2) for _ in range(3))
    micro = lambda X_, t: np.broadcast_to(p0 + t * q + 0.5 * t * t * r, X_.shape).copy()
    state = _tangent_motion_state(body, geo.euclidean(2), motion, micro, dt)
    fields = spatial_fields(state)
    sig_m = random_poly(rng, X, (2, 2), scale)
    rho = fields.rho
    bm = fields.j[..., None] * fields.a_micro - fields.div(sig_m, (2, 0)) / rho[..., None]
    rho = fields.rho
    loads = BodyLoads(b_micro=bm)
    S = scs_tensor(con.StressState(cauchy=np.zeros_like(fields.g), micro_cauchy=sig_m), fields)
    model = con.scs_linear(probe=S / rho[..., None, None, None])
    sigma = 2.0 * rho[..., None, None] * con.metric_derivative(model, con.scs_args(fields), "g")
    stress = con.StressState(cauchy=sigma, micro_cauchy=sig_m)
    b = fields.a - fields.div(sigma, (2, 0)) / rho[..., None]
    return Manufactured("generalized", state, fields, stress, loads.replace(b=b), model)


def manufacture_material(seed: int = 0, dim: int = 2, n: int = 17, scale: float = 0.3) -> Manufactured:
    """Affine maps with stresses chosen so both material-covariance conditions hold."""
    rng = np.random.default_rng(seed)
    grid = unit_grid(dim, n)
    X = grid.nodes()
    F = np.eye(dim) + 0.1 * rng.standard_normal((dim, dim))
    Ft = np.eye(dim) + 0.1 * rng.standard_normal((dim, dim))
    x0, p0 = rng.standard_normal(dim), rng.standard_normal(dim)
    body = ReferenceBody(geo.euclidean(dim), grid, 1.0 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)))
    state = MotionState.sample(body, geo.euclidean(dim), lambda X_, t: x0 + X_ @ F.T, n_levels=1,
                               micro=lambda X_, t: p0 + X_ @ Ft.T, micro_chart=geo.euclidean(dim))
    fields = spatial_fields(state)
    A = random_poly(rng, X, (dim, dim), scale)
    A = A + np.swapaxes(A, -1, -2)
    B = random_poly(rng, X, (dim, dim), scale)
    B = B + np.swapaxes(B, -1, -2)
    G = fields.G
    P = np.einsum("...ab,...Cb,...CD,...DA->...aA", fields.ginv, np.linalg.inv(fields.F), G, A)
    Pm = np.einsum("...ab,...Cb,...CD,...DA->...aA", fields.gM_inv, np.linalg.inv(fields.Ft), G, B)
    model = con.material_linear(A + B, body.density0)
    stress = con.cauchy_from_piola(con.StressState(cauchy=np.zeros_like(P), piola=P, micro_piola=Pm), fields)
    return Manufactured("material", state, fields, stress, BodyLoads(), model, dict(A=A, B=B))


def _varying_metric(rng: np.random.Generator, dim: int, name: str) -> geo.MetricChart:
    """SPD metric A + 0.1 x⊗x on the ambient chart."""
    Q = rng.standard_normal((dim, dim))
    A = np.eye(dim) + 0.1 * Q @ Q.T

    def metric(x):
        x = np.asarray(x, dtype=float)
        return A + 0.1 * np.einsum("...a,...b->...ab", x, x)
    return geo.MetricChart(dim=dim, metric=metric, name=name)


def manufacture_mixture(seed: int = 0, dim: int = 2, n: int = 17, dt: float = 1e-3, scale: float = 0.05,
                        models=None):
    """Two constituents at the same positions with distinct velocities and metrics."""
    from ..mixtures import Constituent, MixtureState, coupled_stresses
    rng = np.random.default_rng(seed)
    grid = unit_grid(dim, n)
    X = grid.nodes()
    models = models or con.mixture_pair()
    states = []
    for i in (1, 2):
        ambient = _varying_metric(rng, dim, f"g{i}")
        body = ReferenceBody(geo.euclidean(dim), grid, 1.0 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)))
        coeffs = _poly_motion_coeffs(rng, dim, scale)
        coeffs["u0"] = {}
        state = MotionState.sample(body, ambient, motion_family("polynomial", coeffs), t0=0.0, dt=dt,
                                   n_levels=3)
        states.append(with_consistent_density(state))
    f1, f2 = (spatial_fields(s) for s in states)
    args = dict(g1=f1.g, g2=f2.g, F1=f1.F, F2=f2.F, G=f1.G)
    sig1, sig2 = coupled_stresses(args, models, (f1.rho, f2.rho))
    cons = []
    for s, f, sig in ((states[0], f1, sig1), (states[1], f2, sig2)):
        b = f.a - f.div(sig, (2, 0)) / f.rho[..., None]
        cons.append(Constituent(s, con.StressState(cauchy=sig), BodyLoads(b=b)))
    nu1 = 0.3 + 0.2 * np.tanh(random_poly(rng, X, scale=0.5)) ** 2
    mix = MixtureState(tuple(cons), (nu1, 1.0 - nu1))
    return Manufactured("mixture", states[0], f1, cons[0].stress, cons[0].loads, models,
                        dict(mixture=mix))


def manufacture_voids(seed: int = 0, dim: int = 2, n: int = 17, dt: float = 1e-3, scale: float = 0.05,
                      model=None):
    """Deforming body with a smooth volume fraction; σ̃ from the closure, b̃ solved."""
    from ..voids import VoidState, closure_void_stress
    rng = np.random.default_rng(seed)
    grid = unit_grid(dim, n)
    X = grid.nodes()
    model = model or con.voids_quadratic(cg=0.3, beta=0.4)
    nu0 = 0.7 + 0.1 * np.tanh(random_poly(rng, X, scale=1.0))
    q, r = (random_poly(rng, X, scale=scale) for _ in range(2))
    micro = lambda X_, t: nu0 + t * q + 0.5 * t * t * r
    matrix = 1.0 + 0.2 * rng.random()
    body = ReferenceBody(geo.euclidean(dim), grid, matrix * nu0)
    state = MotionState.sample(body, geo.euclidean(dim), motion_family("polynomial", _poly_motion_coeffs(rng, dim, scale)),
                               t0=0.0, dt=dt, n_levels=3, micro=micro, micro_chart="scalar")
    state = with_consistent_density(state)
    nu_levels = state.micro
    kappa = 0.4 + 0.1 * rng.random()
    vs = VoidState(state, matrix_density=matrix * nu0 / nu_levels, kappa=kappa)
    fields = spatial_fields(state)
    sig_m = closure_void_stress(vs, fields, model)
    bm = state.micro_ddot - fields.div(sig_m, (1, 0)) / fields.rho
    vs = VoidState(state, vs.matrix_density, vs.kappa, void_stress=sig_m, b_micro=bm)
    return Manufactured("voids", state, fields, con.StressState(cauchy=np.zeros_like(fields.g)),
                        BodyLoads(b_micro=bm), model, dict(void_state=vs))


@dataclass(frozen=True)
class VariationalCase:
    model: object
    spacetime: object


def manufacture_variational(seed: int = 0, n: int = 7, dt: float = 2e-3, levels: int = 5,
                            rho0: float = 1.3, rho_micro0: float = 0.7) -> VariationalCase:
    """Split free Lagrangian on a smooth space-time sample with a curved director metric.

    The energy omits the director-position coupling so the density is
    covariant under both spatial and micro flows.
    """
    from ..variational import sample_spacetime, split_lagrangian
    rng = np.random.default_rng(seed)
    grid = unit_grid(2, n)
    mc = micro_metric_chart(rng, 2)
    A, B = (0.1 * rng.standard_normal((2, 2)) for _ in range(2))
    c = 0.05 * rng.standard_normal(2)
    motion = lambda X, t: X + X @ A.T * (1 + t) + t * c * X ** 2
    micro = lambda X, t: 0.3 + X @ B.T + 0.1 * t * X[..., ::-1] ** 2
    model = split_lagrangian(con.quadratic_free(c5=0.0), rho0=rho0, rho_micro0=rho_micro0)
    st = sample_spacetime(grid, geo.euclidean(2), geo.euclidean(2), motion, dt, levels, micro=micro,
                          micro_chart=mc)
    return VariationalCase(model, st)


def variational_trajectory(seed: int = 0, steps: int = 1000, n: int = 9, dt: float = 2e-3) -> VariationalCase:
    """Leapfrog trajectory of a rotation-invariant split density on flat charts."""
    from ..variational import leapfrog_trajectory, sample_spacetime, split_lagrangian
    rng = np.random.default_rng(seed)
    grid = unit_grid(2, n)
    model = split_lagrangian(con.quadratic_free(c5=0.0), rho0=1.0, rho_micro0=0.5)
    st0 = sample_spacetime(grid, geo.euclidean(2), geo.euclidean(2), lambda X, t: X + 0.05 * np.sin(3 * X),
                           dt, 2, micro=lambda X, t: 0.5 * X + 0.2, micro_chart=geo.euclidean(2))
    shape = st0.phi[0].shape
    traj = leapfrog_trajectory(model, st0, 0.1 * rng.standard_normal(shape), 0.1 * rng.standard_normal(shape),
                               steps=steps)
    return VariationalCase(model, traj)


GENERATORS = {
    "free": manufacture_free,
    "scs": manufacture_scs,
    "gnr": manufacture_gnr,
    "material": manufacture_material,
    "mixture": manufacture_mixture,
    "voids": manufacture_voids,
    "variational": manufacture_variational,
    "generalized": manufacture_generalized,
}


def manufacture(regime: str, seed: int = 0, **kwargs):
    """Consistent state bundle for ``regime``; deterministic in ``seed``."""
    if regime not in GENERATORS:
        raise ValueError(f"unknown regime {regime!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[regime](seed, **kwargs)
