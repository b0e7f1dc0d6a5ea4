"""Elastic solid with voids: scalar director ν, equilibrated inertia κ.

The reference density is stored factored as matrix density times volume
fraction. Residuals act on a :class:`~microcontinuum.kinematics.MotionState`
whose director is the scalar volume fraction.

The 1D simulator integrates the displacement ``u`` and the volume fraction
``ν`` of a bar with a lumped-mass, cell-based potential and velocity Verlet.
Ends have fixed displacement and zero void traction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .constitutive import EnergyModel, slot_derivative, voids_quadratic
from .errors import CFLViolation, NonFiniteEnergy, VoidFractionOutOfRange
from .kinematics import DeformedFields, MotionState, level_rate

INERTIA_FORMS = ("printed", "kinetic-consistent")


@dataclass(frozen=True)
class VoidState:
    """Void-specific fields attached to a motion with a scalar director.

    ``matrix_density`` and the motion's director (ν₀ levels) are stored; the
    reference density is their product. ``kappa`` holds equilibrated-inertia
    levels (or one nodal array, taken as constant in time).
    """

    motion: MotionState
    matrix_density: np.ndarray
    kappa: np.ndarray
    void_stress: Optional[np.ndarray] = None
    b_micro: Optional[np.ndarray] = None
    traction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.motion.micro_kind != "scalar":
            raise ValueError("a void state needs a scalar director")
        nu = self.motion.micro
        if np.any(nu <= 0) or np.any(nu > 1):
            raise VoidFractionOutOfRange("volume fraction must lie in (0, 1]")
        shape = self.motion.body.grid.shape
        L = self.motion.n_levels
        object.__setattr__(self, "matrix_density",
                           np.broadcast_to(np.asarray(self.matrix_density, float), (L,) + shape).copy())
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.shape != (L,) + shape:
            kappa = np.broadcast_to(kappa, (L,) + shape).copy()
        if np.any(kappa < 0):
            raise ValueError("equilibrated inertia must be non-negative")
        object.__setattr__(self, "kappa", kappa)

    @property
    def volume_fraction0(self) -> np.ndarray:
        return self.motion.micro

    @property
    def volume_fraction(self) -> np.ndarray:
        """ν = ν₀ ∘ φ⁻¹, stored per material node at the current level."""
        return self.motion.micro_now

    @property
    def reference_density(self) -> np.ndarray:
        return self.matrix_density * self.volume_fraction0


def void_gradient(state: MotionState, node=None, level: Optional[int] = None) -> np.ndarray:
    """(Tν)_a = (F⁻¹)^A_a ∂ν/∂X^A."""
    from .kinematics import deformation_gradient, _node_or_field
    lvl = state.current if level is None else level
    F = deformation_gradient(state, level=lvl)
    dnu = state.body.grid.gradient(state.micro[lvl])
    out = np.einsum("...A,...Aa->...a", dnu, np.linalg.inv(F))
    return _node_or_field(out, state.body.grid, node)


def void_args(vs: VoidState, fields: DeformedFields) -> dict:
    return dict(g=fields.g, nu=vs.volume_fraction, dnu=void_gradient(vs.motion), F=fields.F,
                G=fields.G, rho0=vs.reference_density[vs.motion.current])


def inertia_factor(vs: VoidState, inertia_form: str) -> np.ndarray:
    if inertia_form not in INERTIA_FORMS:
        raise ValueError(f"inertia_form must be one of {INERTIA_FORMS}")
    k = vs.kappa[vs.motion.current]
    return np.ones_like(k) if inertia_form == "printed" else k


def residual_equilibrated_momentum(vs: VoidState, fields: DeformedFields,
                                   inertia_form: str = "printed") -> np.ndarray:
    """div σ̃ + ρ b̃ − ρ ã (printed) or − ρ κ ã (kinetic-consistent)."""
    sig = np.zeros(fields.x.shape) if vs.void_stress is None else vs.void_stress
    bm = 0.0 if vs.b_micro is None else vs.b_micro
    acc = vs.motion.micro_ddot
    return fields.div(sig, (1, 0)) + fields.rho * (bm - inertia_factor(vs, inertia_form) * acc)


def residual_scalar_doyle_ericksen(vs: VoidState, fields: DeformedFields, model: EnergyModel) -> np.ndarray:
    """(F⁻¹)^A_a σ̃^a ν_{,A} − ρ ∂e/∂(Tν)_a (Tν)_a."""
    args = void_args(vs, fields)
    dnu = args["dnu"]
    sig = np.zeros(fields.x.shape) if vs.void_stress is None else vs.void_stress
    de = slot_derivative(model, args, "dnu")
    return (np.einsum("...a,...a->...", sig, dnu)
            - fields.rho * np.einsum("...a,...a->...", de, dnu))


def closure_void_stress(vs: VoidState, fields: DeformedFields, model: EnergyModel) -> np.ndarray:
    """σ̃ = ρ ∂e/∂(Tν), the closure that makes the scalar Doyle-Ericksen identity exact."""
    return fields.rho[..., None] * slot_derivative(model, void_args(vs, fields), "dnu")


def residual_equilibrated_inertia(vs: VoidState, fields: DeformedFields) -> np.ndarray:
    """Material rate of κ."""
    return level_rate(vs.kappa, vs.motion.dt)


# =============================================================================
# 1D simulator
# =============================================================================

@dataclass
class VoidsConfig:
    n_nodes: int = 257
    length: float = 1.0
    rho0: float = 1.0
    kappa: float = 0.5
    cF: float = 1.0
    cnu: float = 2.0
    cg: float = 1e-3
    beta: float = 0.0
    nu_ref: float = 0.8
    dt: Optional[float] = None
    dt_fraction: float = 0.1
    steps: int = 10000
    inertia_form: str = "printed"
    initial: dict = field(default_factory=lambda: {"family": "uniform", "amplitude": 1e-3})
    cfl_safety: float = 0.5

    @classmethod
    def from_dict(cls, data: dict) -> "VoidsConfig":
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def h(self) -> float:
        return self.length / (self.n_nodes - 1)

    @property
    def kappa_eff(self) -> float:
        if self.inertia_form not in INERTIA_FORMS:
            raise ValueError(f"inertia_form must be one of {INERTIA_FORMS}")
        return self.kappa if self.inertia_form == "kinetic-consistent" else 1.0

    def stability_limit(self) -> float:
        """2/ω_max from the macro wave and the void stiffness bounds."""
        h = self.h
        w_macro = 2.0 * math.sqrt(self.cF / self.rho0) / h
        w_void = math.sqrt((4.0 * self.cg / h ** 2 + 2.0 * self.cnu) / (self.rho0 * self.kappa_eff))
        return 2.0 / max(w_macro, w_void)

    def time_step(self) -> float:
        return self.dt if self.dt is not None else self.dt_fraction * self.stability_limit()

    def oracle_frequency(self) -> float:
        """Angular frequency of small uniform void oscillations: sqrt(2cν / (ρ₀ κ_eff))."""
        return math.sqrt(2.0 * self.cnu / (self.rho0 * self.kappa_eff))

    def model(self) -> EnergyModel:
        return voids_quadratic(self.cF, self.cnu, self.cg, self.beta, self.nu_ref)


@dataclass
class VoidsResult:
    config: VoidsConfig
    times: np.ndarray
    energy: np.ndarray
    mass_residual: np.ndarray
    inertia_residual: np.ndarray
    de_residual: np.ndarray
    mean_nu: np.ndarray
    u: np.ndarray
    nu: np.ndarray
    u_dot: np.ndarray
    nu_dot: np.ndarray
    halted: Optional[str] = None

    @property
    def energy_drift(self) -> float:
        return float(np.abs(self.energy - self.energy[0]).max() / abs(self.energy[0]))

    def measured_frequency(self) -> float:
        return oscillation_frequency(self.times, self.mean_nu - self.config.nu_ref)

    def timeseries(self) -> dict:
        return {"t": self.times, "total_energy": self.energy, "mass_residual": self.mass_residual,
                "inertia_residual": self.inertia_residual, "scalar_de_residual": self.de_residual,
                "mean_nu": self.mean_nu}


def oscillation_frequency(t: np.ndarray, signal: np.ndarray) -> float:
    """Angular frequency from the mean spacing of zero crossings (linear interpolation)."""
    s = np.asarray(signal)
    idx = np.nonzero(np.signbit(s[:-1]) != np.signbit(s[1:]))[0]
    if len(idx) < 3:
        raise ValueError("fewer than three zero crossings; run longer")
    tc = t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])
    half_period = (tc[-1] - tc[0]) / (len(tc) - 1)
    return math.pi / half_period


class _Bar:
    """Lumped 1D bar: cell potential plus trapezoid-weighted node potential."""

    def __init__(self, cfg: VoidsConfig):
        self.cfg = cfg
        n = cfg.n_nodes
        self.h = cfg.h
        self.w = np.ones(n)
        self.w[[0, -1]] = 0.5
        self.mass_u = self.w * self.h * cfg.rho0
        self.mass_nu = self.w * self.h * cfg.rho0 * cfg.kappa_eff

    def cells(self, u, nu):
        F = 1.0 + np.diff(u) / self.h
        s = np.diff(nu) / self.h
        nub = 0.5 * (nu[:-1] + nu[1:])
        return F, s, nub

    def potential(self, u, nu) -> float:
        c = self.cfg
        F, s, nub = self.cells(u, nu)
        cell = (c.cF / 8.0 * (F ** 2 - 1) ** 2 + 0.5 * c.cg * s ** 2 / F ** 2
                + 0.5 * c.beta * (nub - c.nu_ref) * (F ** 2 - 1))
        node = c.cnu * (nu - c.nu_ref) ** 2
        return float(self.h * cell.sum() + self.h * np.dot(self.w, node))

    def forces(self, u, nu):
        c = self.cfg
        F, s, nub = self.cells(u, nu)
        S = 0.5 * c.cF * (F ** 2 - 1) * F - c.cg * s ** 2 / F ** 3 + c.beta * (nub - c.nu_ref) * F
        Q = c.cg * s / F ** 2
        Z = 0.5 * c.beta * (F ** 2 - 1)
        fu = np.zeros_like(u)
        fu[:-1] += S
        fu[1:] -= S
        fu[[0, -1]] = 0.0
        dnu = np.zeros_like(nu)
        dnu[1:] += Q + 0.5 * self.h * Z
        dnu[:-1] += -Q + 0.5 * self.h * Z
        dnu += 2.0 * self.w * self.h * c.cnu * (nu - c.nu_ref)
        return fu, -dnu

    def kinetic(self, ud, nud) -> float:
        return float(0.5 * np.dot(self.mass_u, ud ** 2) + 0.5 * np.dot(self.mass_nu, nud ** 2))


def initial_state(cfg: VoidsConfig):
    n = cfg.n_nodes
    X = np.linspace(0.0, cfg.length, n)
    init = dict(cfg.initial)
    family = init.get("family", "uniform")
    amp = float(init.get("amplitude", 0.0))
    u = np.zeros(n)
    nu = np.full(n, cfg.nu_ref)
    if family == "uniform":
        nu = nu + amp
    elif family == "cosine":
        nu = nu + amp * np.cos(np.pi * X / cfg.length)
    elif family == "stretch_pulse":
        u = amp * np.sin(np.pi * X / cfg.length) ** 2 * np.sin(np.pi * X / cfg.length)
    elif family != "rest":
        raise ValueError(f"unknown initial family {family!r}")
    return X, u, nu, np.zeros(n), np.zeros(n)


def _de_residual(model, cfg, F, s, nu_c, Q) -> float:
    """Cell-wise closure σ̃ Tν minus ρ ∂e/∂(Tν) Tν by perturbation."""
    rho0 = np.full_like(F, cfg.rho0)
    args = dict(g=np.ones(F.shape + (1, 1)), nu=nu_c, dnu=(s / F)[:, None], F=F[:, None, None],
                G=np.ones(F.shape + (1, 1)), rho0=rho0)
    de = slot_derivative(model, args, "dnu")[:, 0]
    rho = cfg.rho0 / F
    return float(np.abs(Q * s / F - rho * de * s / F).max(initial=0.0))


def simulate_voids_bar(cfg: VoidsConfig, record_every: int = 1, closure_scale: float = 1.0) -> VoidsResult:
    """Velocity-Verlet evolution of the coupled displacement and volume fraction.

    ``closure_scale`` multiplies the monitored void stress only (a negative
    control for the Doyle-Ericksen diagnostic); the dynamics are unchanged.
    """
    dt = cfg.time_step()
    limit = cfg.stability_limit()
    if dt > cfg.cfl_safety * limit:
        raise CFLViolation(f"dt={dt:.3e} exceeds {cfg.cfl_safety} x stability limit {limit:.3e}")
    bar = _Bar(cfg)
    model = cfg.model()
    X, u, nu, ud, nud = initial_state(cfg)
    fu, fn = bar.forces(u, nu)
    rec = {k: [] for k in ("t", "E", "mass", "inertia", "de", "nu")}

    def record(step):
        F, s, nub = bar.cells(u, nu)
        E = bar.kinetic(ud, nud) + bar.potential(u, nu)
        if not math.isfinite(E):
            raise NonFiniteEnergy("energy became non-finite")
        Q = closure_scale * cfg.cg * s / F ** 2
        # reference density stays ρ̄₀ ν₀ at every material point: mass per cell is ρ J h = ρ₀ h
        rho = cfg.rho0 / F
        rec["t"].append(step * dt)
        rec["E"].append(E)
        rec["mass"].append(float(np.abs(rho * F - cfg.rho0).max()))
        rec["inertia"].append(0.0)
        rec["de"].append(_de_residual(model, cfg, F, s, nub, Q))
        rec["nu"].append(float(np.dot(bar.w, nu) / bar.w.sum()))

    def result(halted=None):
        return VoidsResult(cfg, np.array(rec["t"]), np.array(rec["E"]), np.array(rec["mass"]),
                           np.array(rec["inertia"]), np.array(rec["de"]), np.array(rec["nu"]),
                           u.copy(), nu.copy(), ud.copy(), nud.copy(), halted)

    record(0)
    for step in range(1, cfg.steps + 1):
        ud = ud + 0.5 * dt * fu / bar.mass_u
        nud = nud + 0.5 * dt * fn / bar.mass_nu
        u = u + dt * ud
        nu = nu + dt * nud
        if np.any(nu <= 0) or np.any(nu > 1) or not np.all(np.isfinite(nu)):
            err = VoidFractionOutOfRange(f"volume fraction left (0, 1] at step {step}")
            err.partial = result(halted=str(err))
            raise err
        fu, fn = bar.forces(u, nu)
        ud = ud + 0.5 * dt * fu / bar.mass_u
        nud = nud + 0.5 * dt * fn / bar.mass_nu
        if step % record_every == 0 or step == cfg.steps:
            record(step)
    return result()


def drift_study(cfg: VoidsConfig, levels: int = 3) -> dict:
    """Energy drift at dt, dt/2, dt/4, ... over the same end time."""
    dt = cfg.time_step()
    t_end = dt * cfg.steps
    drifts, dts = [], []
    for k in range(levels):
        c = VoidsConfig(**{**asdict(cfg), "dt": dt / 2 ** k, "steps": cfg.steps * 2 ** k})
        drifts.append(simulate_voids_bar(c, record_every=1).energy_drift)
        dts.append(dt / 2 ** k)
    ratios = [drifts[i] / drifts[i + 1] for i in range(levels - 1)]
    return {"dt": dts, "drift": drifts, "ratios": ratios, "t_end": t_end}
