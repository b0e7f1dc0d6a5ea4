"""Lagrangian field theory of a continuum with a vector director.

A Lagrangian density is a vectorized callable on an argument mapping with keys

    X, phi, phi_dot, F, G, g, mphi, mphi_dot, Ft, gt

(reference point, deformation and its rate and gradient, reference metric,
ambient metric at ``phi``, director with its rate and gradient, director
metric at ``mphi``). For a director that is a tangent vector of the ambient
(``constrained``) the director metric is the ambient metric at ``phi``.

Every partial derivative of the density is taken by central perturbation.
Two discretizations are provided:

* pointwise Euler-Lagrange residuals at nodes, with central spatial
  differences and rates of the velocity momenta taken between half levels;
* the box-midpoint discrete action and its exact nodal gradient, which gives
  a discrete Euler-Lagrange operator satisfying summation by parts exactly.

With the default convention the density is kinetic minus stored energy,
𝓛 = ½ρ₀|V|² + ½ρ̃₀|Ṽ|² − ρ₀e, so that −∂𝓛/∂F is the energy Piola stress with
its spatial index lowered. The ``printed`` convention uses 𝓛 = ρ₀e + ½ρ₀|V|² + ½ρ̃₀|Ṽ|²;
bridges to stresses flip sign accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constitutive import EPS, EnergyModel, slot_derivative, symmetric_slot_derivative
from .covariance.report import FlowSpec
from .errors import MissingTimeLevel, NonEuclideanChart, NonFiniteDensity
from .geometry import Grid, MetricChart, christoffel, partials

CONVENTIONS = ("kinetic-minus-potential", "printed")
SLOTS = ("X", "phi", "phi_dot", "F", "G", "g", "mphi", "mphi_dot", "Ft", "gt")


# =============================================================================
# Models
# =============================================================================

@dataclass(frozen=True)
class Splitting:
    """Declared form 𝓛 = ½ρ₀ g(V,V) + ½ρ̃₀ g̃(Ṽ,Ṽ) ∓ ρ₀ e."""

    energy: EnergyModel
    rho0: float = 1.0
    rho_micro0: float = 0.0
    convention: str = "kinetic-minus-potential"

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")

    @property
    def energy_sign(self) -> float:
        """Coefficient of ρ₀e in the density."""
        return -1.0 if self.convention == "kinetic-minus-potential" else 1.0

    def energy_args(self, args: dict) -> dict:
        if self.energy.signature == "free":
            return dict(g=args["g"], g_M=args["gt"], F=args["F"], Ft=args["Ft"], G=args["G"], p=args["mphi"])
        return dict(args)

    def kinetic(self, args: dict) -> np.ndarray:
        ke = 0.5 * self.rho0 * np.einsum("...a,...ab,...b->...", args["phi_dot"], args["g"], args["phi_dot"])
        if args.get("mphi_dot") is not None and np.any(self.rho_micro0):
            ke = ke + 0.5 * self.rho_micro0 * np.einsum("...a,...ab,...b->...", args["mphi_dot"], args["gt"],
                                                        args["mphi_dot"])
        return ke

    def density(self, args: dict) -> np.ndarray:
        e = self.energy.evaluate(self.energy_args(args))
        return self.kinetic(args) + self.energy_sign * self.rho0 * e


@dataclass(frozen=True)
class LagrangianModel:
    density: Optional[Callable] = None
    splitting: Optional[Splitting] = None
    constrained: bool = False
    name: str = "lagrangian"

    def __post_init__(self):
        if self.density is None and self.splitting is None:
            raise ValueError("a Lagrangian model needs a density or a splitting")

    def __call__(self, args: dict) -> np.ndarray:
        fn = self.density if self.density is not None else self.splitting.density
        val = np.asarray(fn(args), dtype=float)
        if not np.all(np.isfinite(val)):
            raise NonFiniteDensity(f"Lagrangian density {self.name!r} is not finite")
        return val

    @property
    def energy_sign(self) -> float:
        return -1.0 if self.splitting is None else self.splitting.energy_sign

    def splitting_defect(self, args: dict) -> float:
        """Max |direct density − split sum|; 0 when only one form is given."""
        if self.density is None or self.splitting is None:
            return 0.0
        return float(np.abs(np.asarray(self.density(args)) - self.splitting.density(args)).max())


def split_lagrangian(energy: EnergyModel, rho0: float = 1.0, rho_micro0: float = 0.0,
                     convention: str = "kinetic-minus-potential", constrained: bool = False) -> LagrangianModel:
    return LagrangianModel(splitting=Splitting(energy, rho0, rho_micro0, convention),
                           constrained=constrained, name=f"split_{energy.name}")


def wave_lagrangian(rho0: float = 1.0, c: float = 1.0) -> LagrangianModel:
    """𝓛 = ½ρ₀|φ̇|² − ½c|F − I|²: the linear wave equation for the displacement."""
    def density(args):
        F = args["F"]
        u = F - np.eye(F.shape[-1])
        return (0.5 * rho0 * np.einsum("...a,...a->...", args["phi_dot"], args["phi_dot"])
                - 0.5 * c * np.einsum("...aA,...aA->...", u, u))
    return LagrangianModel(density=density, name="wave")


# =============================================================================
# Space-time data
# =============================================================================

@dataclass(frozen=True)
class SpacetimeGrid:
    """Reference grid times uniform time levels with nodal histories.

    ``phi`` has shape ``(L, *grid.shape, n)`` and ``mphi`` ``(L, *grid.shape, m)``.
    """

    grid: Grid
    dt: float
    phi: np.ndarray
    reference: MetricChart
    ambient: MetricChart
    mphi: Optional[np.ndarray] = None
    micro_chart: Optional[MetricChart] = None
    t0: float = 0.0
    constrained: bool = False

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != self.grid.dim + 2 or phi.shape[1:-1] != self.grid.shape:
            raise ValueError("phi must have shape (L, *grid.shape, n)")
        if phi.shape[0] < 2:
            raise MissingTimeLevel("a space-time grid needs at least two time levels")
        object.__setattr__(self, "phi", phi)
        if self.mphi is not None:
            m = np.asarray(self.mphi, dtype=float)
            if m.shape[:-1] != phi.shape[:-1]:
                raise ValueError("mphi must share the level and grid axes of phi")
            object.__setattr__(self, "mphi", m)
            if self.constrained and m.shape[-1] != phi.shape[-1]:
                raise ValueError("a constrained director must match the ambient dimension")
            if not self.constrained and self.micro_chart is None:
                raise ValueError("an unconstrained director needs a micro chart")

    @property
    def n_levels(self) -> int:
        return self.phi.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_levels)

    def replace(self, **changes) -> "SpacetimeGrid":
        kw = {k: getattr(self, k) for k in ("grid", "dt", "phi", "reference", "ambient", "mphi",
                                            "micro_chart", "t0", "constrained")}
        kw.update(changes)
        return SpacetimeGrid(**kw)

    def metrics(self, phi: np.ndarray, mphi: Optional[np.ndarray]):
        g = self.ambient.metric_at(phi)
        if mphi is None:
            return g, None
        gt = g if self.constrained else self.micro_chart.metric_at(mphi)
        return g, gt

    def micro_gamma(self, phi, mphi):
        if self.constrained:
            return christoffel(self.ambient, phi)
        return christoffel(self.micro_chart, mphi)

    def to_motion_state(self, level: int, density0=1.0, micro_inertia0=1.0):
        """Three-level MotionState centred on ``level`` for cross-module checks."""
        from .kinematics import TANGENT, MotionState, ReferenceBody
        _require_level(self, level)
        sl = slice(level - 1, level + 2)
        body = ReferenceBody(self.reference, self.grid, density0, micro_inertia0)
        micro_chart = None
        if self.mphi is not None:
            micro_chart = TANGENT if self.constrained else self.micro_chart
        return MotionState(body, self.ambient, self.phi[sl], dt=self.dt, time=self.times[level],
                           micro=None if self.mphi is None else self.mphi[sl], micro_chart=micro_chart)


def sample_spacetime(grid: Grid, reference: MetricChart, ambient: MetricChart, motion: Callable,
                     dt: float, n_levels: int, t0: float = 0.0, micro: Optional[Callable] = None,
                     micro_chart: Optional[MetricChart] = None, constrained: bool = False) -> SpacetimeGrid:
    X = grid.nodes()
    times = t0 + dt * np.arange(n_levels)
    phi = np.stack([motion(X, t) for t in times])
    mphi = None if micro is None else np.stack([micro(X, t) for t in times])
    return SpacetimeGrid(grid, dt, phi, reference, ambient, mphi, micro_chart, t0, constrained)


def _require_level(st: SpacetimeGrid, level: int) -> None:
    if st.n_levels < 3:
        raise MissingTimeLevel("central rates need at least three time levels")
    if not 1 <= level <= st.n_levels - 2:
        raise MissingTimeLevel(f"level {level} has no neighbours on both sides")


def _reference_metric(st: SpacetimeGrid, X: np.ndarray) -> np.ndarray:
    return st.reference.metric_at(X)


def node_args(st: SpacetimeGrid, level: int) -> dict:
    """Density arguments at the nodes of ``level`` with central rates."""
    _require_level(st, level)
    X = st.grid.nodes()
    phi = st.phi[level]
    args = dict(X=X, phi=phi, phi_dot=(st.phi[level + 1] - st.phi[level - 1]) / (2 * st.dt),
                F=st.grid.gradient(phi), G=_reference_metric(st, X))
    mphi = None if st.mphi is None else st.mphi[level]
    args["g"], gt = st.metrics(phi, mphi)
    if mphi is not None:
        args.update(mphi=mphi, mphi_dot=(st.mphi[level + 1] - st.mphi[level - 1]) / (2 * st.dt),
                    Ft=st.grid.gradient(mphi), gt=gt)
    return args


def half_args(st: SpacetimeGrid, level: int) -> dict:
    """Density arguments at the nodes between ``level`` and ``level + 1``."""
    X = st.grid.nodes()
    phi = 0.5 * (st.phi[level] + st.phi[level + 1])
    args = dict(X=X, phi=phi, phi_dot=(st.phi[level + 1] - st.phi[level]) / st.dt,
                F=st.grid.gradient(phi), G=_reference_metric(st, X))
    mphi = None if st.mphi is None else 0.5 * (st.mphi[level] + st.mphi[level + 1])
    args["g"], gt = st.metrics(phi, mphi)
    if mphi is not None:
        args.update(mphi=mphi, mphi_dot=(st.mphi[level + 1] - st.mphi[level]) / st.dt,
                    Ft=st.grid.gradient(mphi), gt=gt)
    return args


# =============================================================================
# Partial derivatives of the density
# =============================================================================

def partial(model: LagrangianModel, args: dict, slot: str, eps: float = EPS) -> np.ndarray:
    """∂𝓛/∂(slot) with all other slots held fixed."""
    if slot not in args or args[slot] is None:
        raise KeyError(f"slot {slot!r} not present")
    if slot in ("g", "gt", "G"):
        return symmetric_slot_derivative(model, args, slot, eps)
    return slot_derivative(model, args, slot, eps)


def _position_derivative(model, st: SpacetimeGrid, args: dict, slot: str) -> np.ndarray:
    """∂𝓛/∂x along ``slot`` with the metrics re-evaluated at the moved point."""
    def fn(a):
        moved = dict(args)
        moved[slot] = a[slot]
        g, gt = st.metrics(moved["phi"], moved.get("mphi"))
        moved["g"] = g
        if gt is not None:
            moved["gt"] = gt
        return model(moved)
    return slot_derivative(fn, {slot: args[slot]}, slot)


def canonical_momentum_flux(model: LagrangianModel, args: dict, micro: bool = False) -> np.ndarray:
    """−∂𝓛/∂F (or −∂𝓛/∂F̃), spatial index lower and material index upper."""
    return -partial(model, args, "Ft" if micro else "F")


def energy_piola_from_canonical(canonical: np.ndarray, metric: np.ndarray, energy_sign: float = -1.0) -> np.ndarray:
    """Energy Piola stress P^{aA} = ∓ g^{ab} (−∂𝓛/∂F)_b^A, sign set by the convention."""
    return -energy_sign * np.einsum("...ab,...bA->...aA", np.linalg.inv(metric), canonical)


# =============================================================================
# Pointwise Euler-Lagrange residuals
# =============================================================================

def _two_point_divergence(st, Q, F, gamma, gam_ref):
    """(Q_a^A)_{|A} = ∂_A Q_a^A + Γ^A_{AB} Q_a^B − γ^b_{ac} F^c_A Q_b^A."""
    dQ = st.grid.gradient(Q)
    return (np.einsum("...aAA->...a", dQ) + np.einsum("...AAB,...aB->...a", gam_ref, Q)
            - np.einsum("...bac,...cA,...bA->...a", gamma, F, Q))


def residual_mask(st: SpacetimeGrid) -> np.ndarray:
    """Nodes where the pointwise residuals are second-order accurate.

    The divergence of a nodal flux is a central difference of central
    differences; next to the boundary it reads a one-sided flux value and
    drops to first order, so two node layers are excluded.
    """
    return st.grid.interior_mask(2)


def euler_lagrange_residuals(model: LagrangianModel, st: SpacetimeGrid, levels=None) -> tuple:
    """Nodal macro and micro Euler-Lagrange residuals at interior time levels.

    Returns ``(macro, micro)`` with shapes ``(K, *grid.shape, n)`` and
    ``(K, *grid.shape, m)`` (``micro`` is None without a director). See
    :func:`residual_mask` for the nodes where the values are meaningful.
    """
    if st.n_levels < 3:
        raise MissingTimeLevel("Euler-Lagrange residuals need at least three time levels")
    levels = range(1, st.n_levels - 1) if levels is None else levels
    gam_ref = christoffel(st.reference, st.grid.nodes())
    halves = {}

    def momenta(k):
        if k not in halves:
            a = half_args(st, k)
            halves[k] = (partial(model, a, "phi_dot"),
                         None if st.mphi is None else partial(model, a, "mphi_dot"))
        return halves[k]

    macro, micro = [], []
    for k in levels:
        a = node_args(st, k)
        gam = christoffel(st.ambient, a["phi"])
        (p_up, pm_up), (p_dn, pm_dn) = momenta(k), momenta(k - 1)
        dLdF = partial(model, a, "F")
        dLdg = partial(model, a, "g")
        r = (partial(model, a, "phi") - (p_up - p_dn) / st.dt
             - _two_point_divergence(st, dLdF, a["F"], gam, gam_ref)
             - np.einsum("...bA,...cA,...bac->...a", dLdF, a["F"], gam)
             + 2.0 * np.einsum("...cd,...bd,...bac->...a", dLdg, a["g"], gam))
        macro.append(r)
        if st.mphi is None:
            continue
        dLdFt = partial(model, a, "Ft")
        rm = partial(model, a, "mphi") - (pm_up - pm_dn) / st.dt
        if st.constrained:
            rm = (rm - _two_point_divergence(st, dLdFt, a["F"], gam, gam_ref)
                  - np.einsum("...bA,...cA,...bac->...a", dLdFt, a["Ft"], gam))
        else:
            gm = christoffel(st.micro_chart, a["mphi"])
            dLdgt = partial(model, a, "gt")
            rm = (rm - _two_point_divergence(st, dLdFt, a["Ft"], gm, gam_ref)
                  - np.einsum("...bA,...cA,...bac->...a", dLdFt, a["Ft"], gm)
                  + 2.0 * np.einsum("...cd,...bd,...bac->...a", dLdgt, a["gt"], gm))
        micro.append(rm)
    return np.stack(macro), (np.stack(micro) if micro else None)


# =============================================================================
# Box-midpoint discrete action
# =============================================================================

def _avg(a: np.ndarray, axis: int) -> np.ndarray:
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _diff(a: np.ndarray, axis: int) -> np.ndarray:
    return np.diff(a, axis=axis)


def _pad(a: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * a.ndim
    width[axis] = (1, 1)
    return np.pad(a, width)


def _avg_adjoint(y: np.ndarray, axis: int) -> np.ndarray:
    return _avg(_pad(y, axis), axis)


def _diff_adjoint(y: np.ndarray, axis: int) -> np.ndarray:
    return -_diff(_pad(y, axis), axis)


def _box_values(a: np.ndarray, axes: tuple, steps: tuple):
    """Box-midpoint average and averaged differences of nodal ``a`` along ``axes``."""
    mid = a
    for ax in axes:
        mid = _avg(mid, ax)
    diffs = []
    for j, ax in enumerate(axes):
        d = _diff(a, ax) / steps[j]
        for other in axes:
            if other != ax:
                d = _avg(d, other)
        diffs.append(d)
    return mid, diffs


def _box_adjoint(mid_bar: np.ndarray, diffs_bar: list, axes: tuple, steps: tuple) -> np.ndarray:
    out = mid_bar
    for ax in axes[::-1]:
        out = _avg_adjoint(out, ax)
    for j, ax in enumerate(axes):
        d = diffs_bar[j]
        for other in axes[::-1]:
            if other != ax:
                d = _avg_adjoint(d, other)
        out = out + _diff_adjoint(d, ax) / steps[j]
    return out


def _box_args(st: SpacetimeGrid, phi: np.ndarray, mphi: Optional[np.ndarray]):
    """Density arguments at space-time box centres and the box volumes."""
    d = st.grid.dim
    axes = tuple(range(d + 1))
    steps = (st.dt,) + tuple(st.grid.spacing)
    X = st.grid.nodes()
    Xmid = X
    for ax in range(d):
        Xmid = _avg(Xmid, ax)
    G = _reference_metric(st, Xmid)
    pm, pd = _box_values(phi, axes, steps)
    args = dict(X=Xmid, phi=pm, phi_dot=pd[0], F=np.stack(pd[1:], axis=-1), G=G)
    mm = None
    if mphi is not None:
        mm, md = _box_values(mphi, axes, steps)
        args.update(mphi=mm, mphi_dot=md[0], Ft=np.stack(md[1:], axis=-1))
    args["g"], gt = st.metrics(pm, mm)
    if gt is not None:
        args["gt"] = gt
    vol = st.dt * st.grid.cell_volume * np.sqrt(np.linalg.det(G))
    return args, vol, axes, steps


def action(model: LagrangianModel, st: SpacetimeGrid) -> float:
    """Midpoint quadrature of 𝓛 over space-time boxes."""
    args, vol, _, _ = _box_args(st, st.phi, st.mphi)
    return float(np.sum(vol * model(args)))


def action_gradient(model: LagrangianModel, st: SpacetimeGrid) -> tuple:
    """Exact nodal gradient ∂S/∂φ, ∂S/∂φ̃ of the discrete action."""
    args, vol, axes, steps = _box_args(st, st.phi, st.mphi)
    d = st.grid.dim
    w = vol[..., None]
    pos = w * _position_derivative(model, st, args, "phi")
    rate = w * partial(model, args, "phi_dot")
    grad = w[..., None] * partial(model, args, "F")
    g_phi = _box_adjoint(pos, [rate] + [grad[..., A] for A in range(d)], axes, steps)
    g_mphi = None
    if st.mphi is not None:
        pos = w * _position_derivative(model, st, args, "mphi")
        rate = w * partial(model, args, "mphi_dot")
        grad = w[..., None] * partial(model, args, "Ft")
        g_mphi = _box_adjoint(pos, [rate] + [grad[..., A] for A in range(d)], axes, steps)
    return g_phi, g_mphi


def node_weights(st: SpacetimeGrid) -> np.ndarray:
    """dt h^n sqrt(det G) at every space-time node."""
    G = _reference_metric(st, st.grid.nodes())
    w = st.dt * st.grid.cell_volume * np.sqrt(np.linalg.det(G))
    return np.broadcast_to(w, (st.n_levels,) + st.grid.shape)


def interior_mask(st: SpacetimeGrid) -> np.ndarray:
    mask = np.zeros((st.n_levels,) + st.grid.shape, dtype=bool)
    mask[1:-1] = st.grid.interior_mask(1)
    return mask


def discrete_euler_lagrange(model: LagrangianModel, st: SpacetimeGrid) -> tuple:
    """Action gradient divided by nodal weights; meaningful at interior nodes."""
    gp, gm = action_gradient(model, st)
    w = node_weights(st)[..., None]
    return gp / w, (None if gm is None else gm / w)


def variational_action_test(model: LagrangianModel, st: SpacetimeGrid, dphi: np.ndarray,
                            dmphi: Optional[np.ndarray] = None, step: float = 1e-3) -> dict:
    """Directional derivative of the action versus residual pairing plus boundary term.

    The directional derivative is a Richardson-extrapolated central difference in
    the variation amplitude; the pairing sums residual × variation × weight over
    interior nodes and the boundary term collects every other node.
    """
    dphi = np.asarray(dphi, dtype=float)
    dm = None if dmphi is None else np.asarray(dmphi, dtype=float)

    def S(s):
        return action(model, st.replace(phi=st.phi + s * dphi,
                                        mphi=None if st.mphi is None else st.mphi + s * (0 if dm is None else dm)))

    d1 = (S(step) - S(-step)) / (2 * step)
    d2 = (S(step / 2) - S(-step / 2)) / step
    directional = (4 * d2 - d1) / 3
    gp, gm = action_gradient(model, st)
    inner = interior_mask(st)
    prod = np.einsum("...a,...a->...", gp, dphi)
    if gm is not None and dm is not None:
        prod = prod + np.einsum("...a,...a->...", gm, dm)
    pairing = float(prod[inner].sum())
    boundary = float(prod[~inner].sum())
    return dict(directional=directional, pairing=pairing, boundary=boundary,
                defect=directional - pairing - boundary)


# =============================================================================
# Noether identities
# =============================================================================

def _level(st, level):
    return st.n_levels // 2 if level is None else level


def noether_spatial_check(model: LagrangianModel, st: SpacetimeGrid, flow: Optional[FlowSpec] = None,
                          level: Optional[int] = None) -> dict:
    """Doyle-Ericksen and homogeneity defects of a spatially covariant density.

    de[a, b] = 2 ∂𝓛/∂g_ab − g^{bc} ∂𝓛/∂F^c_A F^a_A − g^{bc} ∂𝓛/∂φ̇^c φ̇^a
    homogeneity[a] = ∂𝓛/∂φ^a (metric held fixed)

    With ``flow`` the derivative of 𝓛 along the flowed arguments is reported too.
    """
    if model.constrained:
        raise ValueError("use noether_constrained_check for a constrained model")
    a = node_args(st, _level(st, level))
    ginv = np.linalg.inv(a["g"])
    rhs = (np.einsum("...bc,...cA,...aA->...ab", ginv, partial(model, a, "F"), a["F"])
           + np.einsum("...bc,...c,...a->...ab", ginv, partial(model, a, "phi_dot"), a["phi_dot"]))
    out = dict(doyle_ericksen=2.0 * partial(model, a, "g") - rhs,
               homogeneity=partial(model, a, "phi"))
    if flow is not None:
        out["flow_derivative"] = flow_derivative(model, st, flow, level)
    return out


def _flow_gradient(flow: FlowSpec, x: np.ndarray) -> np.ndarray:
    if flow.kind == "rigid_rotation":
        return np.broadcast_to(flow.omega, x.shape + x.shape[-1:])
    if flow.kind == "rigid_translation":
        return np.zeros(x.shape + x.shape[-1:])
    return partials(flow.w, x, 1e-5 * (1.0 + np.abs(x)))


def flow_derivative(model: LagrangianModel, st: SpacetimeGrid, flow: FlowSpec,
                    level: Optional[int] = None, step: float = 1e-4) -> np.ndarray:
    """d/ds 𝓛 at s = 0 along φ → φ + s w, Tφ-type slots → (I + s∇w)·, g → pushed-forward metric."""
    a = node_args(st, _level(st, level))
    w = flow.w(a["phi"])
    K = _flow_gradient(flow, a["phi"])
    n = K.shape[-1]

    def moved(s):
        T = np.eye(n) + s * K
        Tinv = np.linalg.inv(T)
        b = dict(a)
        b["phi"] = a["phi"] + s * w
        b["phi_dot"] = np.einsum("...ab,...b->...a", T, a["phi_dot"])
        b["F"] = np.einsum("...ab,...bA->...aA", T, a["F"])
        b["g"] = np.einsum("...ca,...cd,...db->...ab", Tinv, a["g"], Tinv)
        if model.constrained and st.mphi is not None:
            b["mphi"] = np.einsum("...ab,...b->...a", T, a["mphi"])
            b["mphi_dot"] = np.einsum("...ab,...b->...a", T, a["mphi_dot"])
            b["Ft"] = np.einsum("...ab,...bA->...aA", T, a["Ft"])
            b["gt"] = b["g"]
        return model(b)

    return (moved(step) - moved(-step)) / (2 * step)


def noether_micro_check(model: LagrangianModel, st: SpacetimeGrid, level: Optional[int] = None) -> dict:
    """Micro Doyle-Ericksen and micro homogeneity defects.

    micro_doyle_ericksen[α, β] = 2 ∂𝓛/∂g̃_αβ − F̃^α_A g̃^{βμ} ∂𝓛/∂F̃^μ_A − g̃^{βμ} ∂𝓛/∂φ̃̇^μ φ̃̇^α
    micro_homogeneity[α] = ∂𝓛/∂φ̃^α (director metric held fixed)

    For a split density the reduced form 2ρ ∂e/∂g̃ − F₀σ̃ is added, with σ̃ the
    Cauchy transform of the energy micro Piola stress read off the density.
    """
    if st.mphi is None or st.constrained:
        raise ValueError("micro check needs an unconstrained director")
    k = _level(st, level)
    a = node_args(st, k)
    gtinv = np.linalg.inv(a["gt"])
    dLdFt = partial(model, a, "Ft")
    dLdv = partial(model, a, "mphi_dot")
    dLdgt = partial(model, a, "gt")
    de = (2.0 * dLdgt - np.einsum("...aA,...bm,...mA->...ab", a["Ft"], gtinv, dLdFt)
          - np.einsum("...bm,...m,...a->...ab", gtinv, dLdv, a["mphi_dot"]))
    out = dict(micro_doyle_ericksen=de, micro_homogeneity=partial(model, a, "mphi"))
    if model.splitting is not None:
        out["reduced"] = reduced_micro_doyle_ericksen(model, st, k)
    return out


def micro_cauchy_from_density(model: LagrangianModel, st: SpacetimeGrid, level: Optional[int] = None) -> np.ndarray:
    """σ̃^{βb} = J⁻¹ P̃^{βA} F^b_A with P̃ the energy micro Piola stress."""
    a = node_args(st, _level(st, level))
    P = energy_piola_from_canonical(canonical_momentum_flux(model, a, micro=True), a["gt"], model.energy_sign)
    J = _jacobian(a)
    return np.einsum("...aA,...bA->...ab", P, a["F"]) / J[..., None, None]


def _jacobian(a: dict) -> np.ndarray:
    return np.sqrt(np.linalg.det(a["g"]) / np.linalg.det(a["G"])) * np.linalg.det(a["F"])


def reduced_micro_doyle_ericksen(model: LagrangianModel, st: SpacetimeGrid, level: Optional[int] = None) -> np.ndarray:
    """2ρ ∂e/∂g̃ − F₀σ̃ computed from density derivatives alone (needs a splitting)."""
    sp = model.splitting
    if sp is None:
        raise ValueError("reduced form needs a declared splitting")
    k = _level(st, level)
    a = node_args(st, k)
    J = _jacobian(a)
    v = a["mphi_dot"]
    two_rho0_dedgt = sp.energy_sign * (2.0 * partial(model, a, "gt")
                                      - sp.rho_micro0 * np.einsum("...a,...b->...ab", v, v))
    sig_m = micro_cauchy_from_density(model, st, k)
    F0 = np.einsum("...aA,...Ab->...ab", a["Ft"], np.linalg.inv(a["F"]))
    return two_rho0_dedgt / J[..., None, None] - np.einsum("...ab,...gb->...ag", F0, sig_m)


def noether_constrained_check(model: LagrangianModel, st: SpacetimeGrid, level: Optional[int] = None) -> dict:
    """Combined Doyle-Ericksen and homogeneity defects when flows also move the director.

    de[a, b] = 2 ∂𝓛/∂g_ab − g^{bc} (∂𝓛/∂F^c_A F^a_A + ∂𝓛/∂φ̇^c φ̇^a + ∂𝓛/∂φ̃^c φ̃^a
                                    + ∂𝓛/∂φ̃̇^c φ̃̇^a + ∂𝓛/∂F̃^c_A F̃^a_A)
    homogeneity[a] = ∂𝓛/∂φ^a − (∂𝓛/∂φ̃^c φ̃^b + ∂𝓛/∂φ̃̇^c φ̃̇^b + ∂𝓛/∂F̃^c_A F̃^b_A) γ^c_ab
    """
    a = node_args(st, _level(st, level))
    ginv = np.linalg.inv(a["g"])
    macro = (np.einsum("...cA,...aA->...ca", partial(model, a, "F"), a["F"])
             + np.einsum("...c,...a->...ca", partial(model, a, "phi_dot"), a["phi_dot"]))
    micro = np.zeros_like(macro)
    if st.mphi is not None:
        micro = (np.einsum("...c,...a->...ca", partial(model, a, "mphi"), a["mphi"])
                 + np.einsum("...c,...a->...ca", partial(model, a, "mphi_dot"), a["mphi_dot"])
                 + np.einsum("...cA,...aA->...ca", partial(model, a, "Ft"), a["Ft"]))
    de = 2.0 * partial(model, a, "g") - np.einsum("...bc,...ca->...ab", ginv, macro + micro)
    gam = christoffel(st.ambient, a["phi"])
    hom = partial(model, a, "phi") - np.einsum("...cb,...cab->...a", micro, gam)
    return dict(doyle_ericksen=de, homogeneity=hom, micro_terms=np.einsum("...bc,...ca->...ab", ginv, micro))


# =============================================================================
# Leapfrog trajectories and discrete momenta
# =============================================================================

def _require_flat(chart: MetricChart, pts: np.ndarray) -> None:
    g = chart.metric_at(pts)
    if np.abs(g - np.eye(chart.dim)).max() > 1e-14:
        raise NonEuclideanChart("leapfrog integration needs Cartesian charts")


def _lumped_volume(st: SpacetimeGrid) -> np.ndarray:
    """Trapezoid node volumes h^n sqrt(det G) w_n."""
    d = st.grid.dim
    cell = np.full(tuple(s - 1 for s in st.grid.shape), st.grid.cell_volume)
    Xmid = st.grid.nodes()
    for ax in range(d):
        Xmid = _avg(Xmid, ax)
    cell = cell * np.sqrt(np.linalg.det(_reference_metric(st, Xmid)))
    for ax in range(d)[::-1]:
        cell = _avg_adjoint(cell, ax)
    return cell


def potential_gradient(model: LagrangianModel, st: SpacetimeGrid, phi: np.ndarray,
                       mphi: Optional[np.ndarray]) -> tuple:
    """Gradient of V = Σ_cells vol ρ₀e with ρ₀e read off the density at zero rates."""
    sign = model.energy_sign
    d = st.grid.dim
    axes = tuple(range(d))
    steps = tuple(st.grid.spacing)
    X = st.grid.nodes()
    Xmid = X
    for ax in axes:
        Xmid = _avg(Xmid, ax)
    G = _reference_metric(st, Xmid)
    pm, pd = _box_values(phi, axes, steps)
    args = dict(X=Xmid, phi=pm, phi_dot=np.zeros_like(pm), F=np.stack(pd, axis=-1), G=G)
    mm = None
    if mphi is not None:
        mm, md = _box_values(mphi, axes, steps)
        args.update(mphi=mm, mphi_dot=np.zeros_like(mm), Ft=np.stack(md, axis=-1))
    args["g"], gt = st.metrics(pm, mm)
    if gt is not None:
        args["gt"] = gt
    vol = (st.grid.cell_volume * np.sqrt(np.linalg.det(G)))[..., None]
    pot = lambda a: sign * model(a)
    pos = vol * _position_derivative(pot, st, args, "phi")
    grad = vol[..., None] * slot_derivative(pot, args, "F")
    g_phi = _box_adjoint(pos, [grad[..., A] for A in range(d)], axes, steps)
    g_m = None
    if mphi is not None:
        pos = vol * _position_derivative(pot, st, args, "mphi")
        grad = vol[..., None] * slot_derivative(pot, args, "Ft")
        g_m = _box_adjoint(pos, [grad[..., A] for A in range(d)], axes, steps)
    return g_phi, g_m


def leapfrog_trajectory(model: LagrangianModel, st0: SpacetimeGrid, velocity: np.ndarray,
                        micro_velocity: Optional[np.ndarray] = None, steps: int = 1000) -> SpacetimeGrid:
    """Störmer-Verlet evolution of a split density with free boundaries.

    ``st0`` supplies the grid, charts, time step and the initial fields as its
    first level. Masses are ρ₀ (and ρ̃₀) times the lumped node volumes.
    """
    sp = model.splitting
    if sp is None or sp.convention != "kinetic-minus-potential":
        raise ValueError("leapfrog needs a split density in the kinetic-minus-potential convention")
    _require_flat(st0.ambient, st0.phi[0])
    if st0.mphi is not None and not st0.constrained:
        _require_flat(st0.micro_chart, st0.mphi[0])
    vol = _lumped_volume(st0)[..., None]
    M = sp.rho0 * vol
    Mm = sp.rho_micro0 * vol
    dt = st0.dt
    has_micro = st0.mphi is not None
    if has_micro and not np.all(Mm > 0):
        raise ValueError("a director needs positive micro inertia for explicit stepping")
    q = [st0.phi[0]]
    r = [st0.mphi[0]] if has_micro else None
    fp, fm = potential_gradient(model, st0, q[0], r[0] if has_micro else None)
    q.append(q[0] + dt * velocity - 0.5 * dt * dt * fp / M)
    if has_micro:
        r.append(r[0] + dt * micro_velocity - 0.5 * dt * dt * fm / Mm)
    for _ in range(steps - 1):
        fp, fm = potential_gradient(model, st0, q[-1], r[-1] if has_micro else None)
        q.append(2 * q[-1] - q[-2] - dt * dt * fp / M)
        if has_micro:
            r.append(2 * r[-1] - r[-2] - dt * dt * fm / Mm)
    return st0.replace(phi=np.stack(q), mphi=np.stack(r) if has_micro else None)


@dataclass
class DriftSeries:
    times: np.ndarray
    momentum: np.ndarray
    scale: float
    flow_kind: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def drift(self) -> np.ndarray:
        return np.abs(self.momentum - self.momentum[0]) / self.scale

    @property
    def max_drift(self) -> float:
        return float(self.drift.max())


def noether_drift(model: LagrangianModel, st: SpacetimeGrid, flow: FlowSpec) -> DriftSeries:
    """Σ_nodes vol (∂𝓛/∂φ̇ · w + ∂𝓛/∂φ̃̇ · ∇w φ̃) at each half level.

    The director term is present only for constrained directors, which the
    spatial flow moves through its tangent map.
    """
    vol = _lumped_volume(st)
    J, scale = [], 0.0
    for k in range(st.n_levels - 1):
        a = half_args(st, k)
        pi = partial(model, a, "phi_dot")
        w = flow.w(a["phi"])
        dens = np.einsum("...a,...a->...", pi, w)
        mag = np.linalg.norm(pi, axis=-1) * np.linalg.norm(w, axis=-1)
        if st.constrained and st.mphi is not None:
            pim = partial(model, a, "mphi_dot")
            act = np.einsum("...ab,...b->...a", _flow_gradient(flow, a["phi"]), a["mphi"])
            dens = dens + np.einsum("...a,...a->...", pim, act)
            mag = mag + np.linalg.norm(pim, axis=-1) * np.linalg.norm(act, axis=-1)
        J.append(float(np.sum(vol * dens)))
        if k == 0:
            scale = max(abs(J[0]), float(np.sum(vol * mag)), 1e-300)
    times = st.t0 + st.dt * (np.arange(st.n_levels - 1) + 0.5)
    return DriftSeries(times, np.array(J), scale, flow.kind)
