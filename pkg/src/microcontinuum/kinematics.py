"""Two-map kinematics of a structured continuum on a discretized reference body.

A :class:`MotionState` stores up to three time levels of the deformation map
``phi`` and of the director field ``micro``. The current level is the middle
one when three levels are stored and the first one otherwise; rates are
central differences with three levels and one-sided with two.

All nodal fields live on the reference grid: a spatial field ``f`` is stored
as ``f(phi(X))`` at node ``X``, and spatial derivatives are obtained from
material ones through ``F^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import expm
from scipy.spatial import cKDTree

from .errors import BoundaryNode, DegenerateF, MissingTimeLevel, NonInjectiveMotion
from .geometry import Grid, MetricChart, christoffel, connection_terms

MicroChart = Union[MetricChart, str, None]
TANGENT = "tangent-of-ambient"
SCALAR = "scalar"


# =============================================================================
# Time levels
# =============================================================================

def current_level(n_levels: int) -> int:
    return 1 if n_levels == 3 else 0


def level_rate(levels: np.ndarray, dt: float) -> np.ndarray:
    """First time derivative at the current level."""
    L = levels.shape[0]
    if L == 3:
        return (levels[2] - levels[0]) / (2.0 * dt)
    if L == 2:
        return (levels[1] - levels[0]) / dt
    raise MissingTimeLevel("a rate needs at least two stored time levels")


def level_second_rate(levels: np.ndarray, dt: float) -> np.ndarray:
    if levels.shape[0] != 3:
        raise MissingTimeLevel("a second time derivative needs three stored time levels")
    return (levels[2] - 2.0 * levels[1] + levels[0]) / dt ** 2


def level_times(t0: float, dt: float, n_levels: int) -> list:
    if n_levels == 3:
        return [t0 - dt, t0, t0 + dt]
    return [t0 + k * dt for k in range(n_levels)]


# =============================================================================
# Reference body and motion
# =============================================================================

@dataclass(frozen=True)
class ReferenceBody:
    """Reference chart (metric G), node grid, ρ₀ and micro-inertia j₀."""

    chart: MetricChart
    grid: Grid
    density0: np.ndarray
    micro_inertia0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.chart.dim != self.grid.dim:
            raise ValueError("reference chart and grid dimensions differ")
        rho0 = np.broadcast_to(np.asarray(self.density0, dtype=float), self.grid.shape).copy()
        if np.any(rho0 <= 0):
            raise ValueError("reference density must be positive")
        object.__setattr__(self, "density0", rho0)
        j0 = 1.0 if self.micro_inertia0 is None else self.micro_inertia0
        j0 = np.broadcast_to(np.asarray(j0, dtype=float), self.grid.shape).copy()
        if np.any(j0 < 0):
            raise ValueError("micro-inertia must be non-negative")
        object.__setattr__(self, "micro_inertia0", j0)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes()


@dataclass(frozen=True)
class MotionState:
    """Stored time levels of both deformation maps.

    ``phi`` has shape ``(L, *grid.shape, n)``; ``micro`` has shape
    ``(L, *grid.shape, m)`` for vector directors or ``(L, *grid.shape)`` for a
    scalar director. ``micro_chart`` is a MetricChart (free vector director),
    ``"tangent-of-ambient"`` or ``"scalar"``. ``density`` and ``micro_inertia``
    optionally override the spatial ρ and j levels (otherwise ρ = ρ₀/J and j
    is transported with the material point).
    """

    body: ReferenceBody
    ambient: MetricChart
    phi: np.ndarray
    dt: float = 1.0
    time: float = 0.0
    micro: Optional[np.ndarray] = None
    micro_chart: MicroChart = None
    density: Optional[np.ndarray] = None
    micro_inertia: Optional[np.ndarray] = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        shape = self.body.grid.shape
        if phi.ndim == len(shape) + 1:
            phi = phi[None]
        if phi.shape[1:] != shape + (self.ambient.dim,):
            raise ValueError(f"phi must have shape (L, {shape}, {self.ambient.dim}), got {phi.shape}")
        if not 1 <= phi.shape[0] <= 3:
            raise ValueError("between one and three time levels are supported")
        if self.ambient.dim != self.body.grid.dim:
            raise ValueError("ambient and reference dimensions must agree")
        object.__setattr__(self, "phi", phi)
        L = phi.shape[0]
        if self.micro is not None:
            micro = np.asarray(self.micro, dtype=float)
            if self.micro_chart is None:
                raise ValueError("a director field needs a micro_chart tag")
            if self.micro_chart == SCALAR:
                if micro.ndim == len(shape):
                    micro = np.broadcast_to(micro, (L,) + shape).copy()
                if micro.shape != (L,) + shape:
                    raise ValueError("scalar director must have shape (L, *grid.shape)")
            else:
                if micro.ndim == len(shape) + 1:
                    micro = np.broadcast_to(micro, (L,) + micro.shape).copy()
                if micro.shape[:-1] != (L,) + shape:
                    raise ValueError("vector director must have shape (L, *grid.shape, m)")
                if self.micro_chart == TANGENT and micro.shape[-1] != self.ambient.dim:
                    raise ValueError("tangent-of-ambient director must match the ambient dimension")
                if isinstance(self.micro_chart, MetricChart) and micro.shape[-1] != self.micro_chart.dim:
                    raise ValueError("director dimension must match the micro chart")
            object.__setattr__(self, "micro", micro)
        for name in ("density", "micro_inertia"):
            val = getattr(self, name)
            if val is not None:
                val = np.broadcast_to(np.asarray(val, dtype=float), (L,) + shape).copy()
                object.__setattr__(self, name, val)

    # -- construction ----------------------------------------------------------
    @classmethod
    def sample(cls, body: ReferenceBody, ambient: MetricChart, motion: Callable,
               t0: float = 0.0, dt: float = 1e-3, n_levels: int = 3,
               micro: Optional[Callable] = None, micro_chart: MicroChart = None,
               density: Optional[Callable] = None,
               micro_inertia: Optional[Callable] = None) -> "MotionState":
        """Sample analytic maps ``motion(X, t)`` (and friends) at the stored levels."""
        X = body.nodes
        times = level_times(t0, dt, n_levels)

        def stack(fn):
            return None if fn is None else np.stack([np.asarray(fn(X, t), dtype=float) for t in times])
        return cls(body=body, ambient=ambient, phi=stack(motion), dt=dt, time=t0,
                   micro=stack(micro), micro_chart=micro_chart, density=stack(density),
                   micro_inertia=stack(micro_inertia))

    def with_levels(self, **changes) -> "MotionState":
        kw = dict(body=self.body, ambient=self.ambient, phi=self.phi, dt=self.dt, time=self.time,
                  micro=self.micro, micro_chart=self.micro_chart, density=self.density,
                  micro_inertia=self.micro_inertia)
        kw.update(changes)
        return MotionState(**kw)

    # -- levels ------------------------------------------------------------------
    @property
    def n_levels(self) -> int:
        return self.phi.shape[0]

    @property
    def current(self) -> int:
        return current_level(self.n_levels)

    @property
    def micro_kind(self) -> Optional[str]:
        if self.micro is None:
            return None
        if isinstance(self.micro_chart, MetricChart):
            return "free"
        return "tangent" if self.micro_chart == TANGENT else "scalar"

    @property
    def phi_now(self) -> np.ndarray:
        return self.phi[self.current]

    @property
    def phi_dot(self) -> np.ndarray:
        return level_rate(self.phi, self.dt)

    @property
    def phi_ddot(self) -> np.ndarray:
        return level_second_rate(self.phi, self.dt)

    @property
    def micro_now(self) -> Optional[np.ndarray]:
        return None if self.micro is None else self.micro[self.current]

    @property
    def micro_dot(self) -> np.ndarray:
        return level_rate(self.micro, self.dt)

    @property
    def micro_ddot(self) -> np.ndarray:
        return level_second_rate(self.micro, self.dt)


# =============================================================================
# Motion families
# =============================================================================

def _poly_field(spec: Optional[dict], X: np.ndarray) -> np.ndarray:
    n = X.shape[-1]
    out = np.zeros_like(X)
    if not spec:
        return out
    if "b" in spec:
        out = out + np.asarray(spec["b"], dtype=float)
    if "A" in spec:
        out = out + X @ np.asarray(spec["A"], dtype=float).reshape(n, n).T
    if "B" in spec:
        B = np.asarray(spec["B"], dtype=float).reshape(n, n, n)
        out = out + 0.5 * np.einsum("abc,...b,...c->...a", B, X, X)
    return out


def motion_family(name: str, params: Optional[dict] = None) -> Callable:
    """Analytic motion ``phi(X, t)`` from a named family.

    * ``identity``
    * ``stretch``: ``lambda`` (scalar or per-axis list)
    * ``shear``: ``gamma`` with optional ``axes`` ``[i, j]`` (x_i += γ X_j)
    * ``rigid_rotation``: ``omega`` (2D scalar rate or 3D axial vector), optional ``velocity``
    * ``polynomial``: ``u0``, ``u1``, ``u2`` dicts with keys ``b``, ``A``, ``B``
      giving φ = X + u0(X) + t u1(X) + ½ t² u2(X)
    """
    params = dict(params or {})
    if name == "identity":
        return lambda X, t: np.array(X, dtype=float)
    if name == "stretch":
        lam = params.get("lambda", 1.0)

        def stretch(X, t):
            scale = np.ones(X.shape[-1])
            if np.ndim(lam) == 0:
                scale[0] = lam
            else:
                scale[:] = lam
            return X * scale
        return stretch
    if name == "shear":
        gamma = float(params.get("gamma", 0.0))
        i, j = params.get("axes", [0, 1])

        def shear(X, t):
            out = np.array(X, dtype=float)
            out[..., i] += gamma * X[..., j]
            return out
        return shear
    if name == "rigid_rotation":
        omega = params.get("omega", 1.0)
        vel = params.get("velocity")

        def rotation(X, t):
            n = X.shape[-1]
            if n == 2:
                W = np.array([[0.0, -float(omega)], [float(omega), 0.0]])
            else:
                w = np.asarray(omega, dtype=float)
                W = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
            out = X @ expm(W * t).T
            if vel is not None:
                out = out + t * np.asarray(vel, dtype=float)
            return out
        return rotation
    if name == "polynomial":
        def poly(X, t):
            return (X + _poly_field(params.get("u0"), X) + t * _poly_field(params.get("u1"), X)
                    + 0.5 * t * t * _poly_field(params.get("u2"), X))
        return poly
    raise ValueError(f"unknown motion family {name!r}")


# =============================================================================
# Gradients and measures
# =============================================================================

def _node_or_field(arr: np.ndarray, grid: Grid, node) -> np.ndarray:
    if node is None:
        return arr
    node = tuple(int(i) for i in node)
    if not grid.is_interior(node):
        raise BoundaryNode(f"node {node} has no central stencil")
    return arr[node]


def _check_det(F: np.ndarray, grid: Grid):
    det = np.linalg.det(F)
    if np.any(det[grid.interior_mask()] <= 0):
        raise DegenerateF("deformation gradient has det F <= 0 at an interior node")
    return det


def deformation_gradient(state: MotionState, node=None, level: Optional[int] = None) -> np.ndarray:
    """F^a_A by central differences of phi over the reference grid."""
    lvl = state.current if level is None else level
    F = state.body.grid.gradient(state.phi[lvl])
    _check_det(F, state.body.grid)
    return _node_or_field(F, state.body.grid, node)


def _material_micro_gradient(state: MotionState, level: int) -> np.ndarray:
    if state.micro is None:
        raise ValueError("state carries no director field")
    return state.body.grid.gradient(state.micro[level])


def micro_deformation_gradient(state: MotionState, node=None, level: Optional[int] = None) -> np.ndarray:
    """Gradient of the director over the reference grid.

    Scalar directors give a covector ``(..., A)``, free vector directors
    ``F̃[α, A]``. Tangent-of-ambient directors give the composed spatial object
    ``F̃[a, b] = ∂p^a/∂x^b``.
    """
    lvl = state.current if level is None else level
    Ft = _material_micro_gradient(state, lvl)
    if state.micro_kind == "tangent":
        F = deformation_gradient(state, level=lvl)
        Ft = np.einsum("...aA,...Ab->...ab", Ft, np.linalg.inv(F))
    return _node_or_field(Ft, state.body.grid, node)


def pullback_metric(state: MotionState, node=None, level: Optional[int] = None) -> np.ndarray:
    """C_AB = F^a_A g_ab(phi) F^b_B."""
    lvl = state.current if level is None else level
    F = deformation_gradient(state, level=lvl)
    g = state.ambient.metric_at(state.phi[lvl])
    C = np.einsum("...aA,...ab,...bB->...AB", F, g, F)
    return _node_or_field(C, state.body.grid, node)


def jacobian(state: MotionState, node=None, level: Optional[int] = None) -> np.ndarray:
    """J = sqrt(det g(phi) / det G(X)) det F."""
    lvl = state.current if level is None else level
    F = deformation_gradient(state, level=lvl)
    g = state.ambient.metric_at(state.phi[lvl])
    G = state.body.chart.metric_at(state.body.nodes)
    J = np.sqrt(np.linalg.det(g) / np.linalg.det(G)) * np.linalg.det(F)
    return _node_or_field(J, state.body.grid, node)


def check_injective(points: np.ndarray, scale: float) -> None:
    flat = points.reshape(-1, points.shape[-1])
    tree = cKDTree(flat)
    if tree.query_pairs(r=1e-9 * scale):
        raise NonInjectiveMotion("two nodes map to the same spatial point")


# =============================================================================
# Spatial fields
# =============================================================================

@dataclass(frozen=True)
class DeformedFields:
    """Spatial quantities at the current level, stored per reference node."""

    state: MotionState
    x: np.ndarray
    F: np.ndarray
    Finv: np.ndarray
    C: np.ndarray
    J: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    G: np.ndarray
    v: Optional[np.ndarray]
    rho_levels: np.ndarray
    j_levels: np.ndarray
    Ft: Optional[np.ndarray] = None
    F0: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    gM: Optional[np.ndarray] = None
    gM_inv: Optional[np.ndarray] = None
    gammaM: Optional[np.ndarray] = None
    v_micro: Optional[np.ndarray] = None
    gamma_levels: Optional[np.ndarray] = field(default=None, repr=False)

    # -- scalars and rates -----------------------------------------------------
    @property
    def grid(self) -> Grid:
        return self.state.body.grid

    @property
    def interior(self) -> np.ndarray:
        return self.grid.interior_mask()

    @property
    def rho(self) -> np.ndarray:
        return self.rho_levels[self.state.current]

    @property
    def j(self) -> np.ndarray:
        return self.j_levels[self.state.current]

    @property
    def rho_rate(self) -> np.ndarray:
        return level_rate(self.rho_levels, self.state.dt)

    @property
    def j_rate(self) -> np.ndarray:
        return level_rate(self.j_levels, self.state.dt)

    @property
    def a(self) -> np.ndarray:
        """Covariant acceleration A + Γ(V, V)."""
        V = self.state.phi_dot
        return self.state.phi_ddot + np.einsum("...abc,...b,...c->...a", self.gamma, V, V)

    @property
    def a_micro(self) -> np.ndarray:
        """Micro acceleration: covariant second rate of the director."""
        kind = self.state.micro_kind
        pdd = self.state.micro_ddot
        if kind == "scalar":
            return pdd
        pd = self.state.micro_dot
        if kind == "free":
            return pdd + np.einsum("...abc,...b,...c->...a", self.gammaM, pd, pd)
        V = self.state.phi_dot
        A = self.state.phi_ddot
        gdot = level_rate(self.gamma_levels, self.state.dt)
        ein = lambda G_, u, w: np.einsum("...abc,...b,...c->...a", G_, u, w)
        return (pdd + ein(gdot, V, self.p) + ein(self.gamma, A, self.p) + ein(self.gamma, V, pd)
                + ein(self.gamma, V, self.v_micro))

    # -- nodal spatial calculus ------------------------------------------------
    def grad(self, f: np.ndarray) -> np.ndarray:
        """Spatial partials ∂f/∂x^b of a nodal field, derivative index last."""
        f = np.asarray(f, dtype=float)
        dX = self.grid.gradient(f)
        k = f.ndim - self.grid.dim
        lead = dX.shape[:self.grid.dim]
        flat = dX.reshape(lead + (-1, self.grid.dim))
        out = np.einsum("...kA,...Ab->...kb", flat, self.Finv)
        return out.reshape(f.shape + (self.grid.dim,))

    def cov(self, T: np.ndarray, valence: tuple) -> np.ndarray:
        """Covariant derivative of a spatial tensor field under the ambient metric."""
        return self.grad(T) + connection_terms(np.asarray(T, dtype=float), self.gamma, valence)

    def div(self, T: np.ndarray, valence: tuple) -> np.ndarray:
        """Contract the last upper index of ∇T with the derivative index."""
        r, s = valence
        D = self.cov(T, valence)
        k = r + s + 1
        return np.trace(D, axis1=D.ndim - k + r - 1, axis2=D.ndim - 1)

    def micro_div(self, sig: np.ndarray) -> np.ndarray:
        """Divergence of a micro-spatial tensor σ̃^{αb} over its spatial index."""
        kind = self.state.micro_kind
        if kind == "tangent":
            return self.div(sig, (2, 0))
        if kind == "scalar":
            return self.div(sig, (1, 0))
        out = np.einsum("...abb->...a", self.grad(sig))
        out = out + np.einsum("...bbc,...ac->...a", self.gamma, sig)
        out = out + np.einsum("...abg,...bc,...gc->...a", self.gammaM, sig, self.F0)
        return out

    def lower(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.g, v)

    def raise_index(self, c: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.ginv, c)


def spatial_fields(state: MotionState) -> DeformedFields:
    """Assemble all spatial quantities of ``state`` at its current level."""
    grid = state.body.grid
    cur = state.current
    x = state.phi_now
    extent = float(np.ptp(x.reshape(-1, x.shape[-1]), axis=0).max()) or 1.0
    check_injective(x, extent)

    G = state.body.chart.metric_at(state.body.nodes)
    detG = np.linalg.det(G)
    Fs, Js, gammas = [], [], []
    for lvl in range(state.n_levels):
        F = deformation_gradient(state, level=lvl)
        g = state.ambient.metric_at(state.phi[lvl])
        Fs.append(F)
        Js.append(np.sqrt(np.linalg.det(g) / detG) * np.linalg.det(F))
        if state.micro_kind == "tangent" and state.n_levels == 3:
            gammas.append(christoffel(state.ambient, state.phi[lvl]))
    F = Fs[cur]
    Finv = np.linalg.inv(F)
    g = state.ambient.metric_at(x)
    ginv = np.linalg.inv(g)
    gamma = gammas[cur] if gammas else christoffel(state.ambient, x)
    C = np.einsum("...aA,...ab,...bB->...AB", F, g, F)

    if state.density is not None:
        rho_levels = state.density
    else:
        rho_levels = np.stack([state.body.density0 / Jl for Jl in Js])
    if state.micro_inertia is not None:
        j_levels = state.micro_inertia
    else:
        j_levels = np.broadcast_to(state.body.micro_inertia0, (state.n_levels,) + grid.shape)

    try:
        v = state.phi_dot
    except MissingTimeLevel:
        v = None

    kw = {}
    kind = state.micro_kind
    if kind is not None:
        p = state.micro_now
        Ft = grid.gradient(p)
        kw["p"] = p
        kw["Ft"] = Ft
        if kind == "free":
            F0 = np.einsum("...aA,...Ab->...ab", Ft, Finv)
            kw["F0"] = F0
            kw["gM"] = state.micro_chart.metric_at(p)
            kw["gM_inv"] = np.linalg.inv(kw["gM"])
            kw["gammaM"] = christoffel(state.micro_chart, p)
        elif kind == "tangent":
            F0 = np.einsum("...aA,...Ab->...ab", Ft, Finv)
            kw["F0"] = F0
            kw["gM"], kw["gM_inv"], kw["gammaM"] = g, ginv, gamma
            if gammas:
                kw["gamma_levels"] = np.stack(gammas)
        try:
            pd = state.micro_dot
            if kind == "tangent" and v is not None:
                pd = pd + np.einsum("...abc,...b,...c->...a", gamma, v, p)
            kw["v_micro"] = pd
        except MissingTimeLevel:
            pass

    return DeformedFields(state=state, x=x, F=F, Finv=Finv, C=C, J=Js[cur], g=g, ginv=ginv,
                          gamma=gamma, G=G, v=v, rho_levels=rho_levels, j_levels=j_levels, **kw)


def scs_micro_velocity(state: MotionState, node=None) -> np.ndarray:
    """ṽ^a = ∂p^a/∂t + (∂p^a/∂x^b) v^b + Γ^a_{bc} v^b p^c.

    With nodal storage the first two terms are the rate of the director at a
    fixed material point, so ṽ = ṗ + Γ(v, p).
    """
    if state.micro_kind != "tangent":
        raise ValueError("scs_micro_velocity needs a tangent-of-ambient director")
    pd = state.micro_dot
    V = state.phi_dot
    gamma = christoffel(state.ambient, state.phi_now)
    out = pd + np.einsum("...abc,...b,...c->...a", gamma, V, state.micro_now)
    return _node_or_field(out, state.body.grid, node)
