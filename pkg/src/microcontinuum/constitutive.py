"""Energy models, perturbation derivatives and stress extraction.

Energies are per unit mass and vectorized: ``model.evaluate(args)`` takes a
mapping of slot name to nodal arrays (any common batch shape) and returns the
energy at every batch entry.

Metric derivatives use symmetric-slot perturbation: entry ``(a, b)`` and its
mirror ``(b, a)`` move together, and the difference quotient of an
off-diagonal pair is halved. This yields the symmetric gradient ``S`` with
``de = S^{ab} dg_ab`` summed over all index pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import NonFiniteEnergy, SingularF0, SlotNotInSignature, ZeroNormal

EPS = 1e-6
RICHARDSON_TOL = 1e-9

METRIC_SLOTS = {
    "free": ("g", "g_M"),
    "scs": ("g",),
    "voids": ("g",),
    "mixture": ("g1", "g2"),
    "material": ("G",),
}


@dataclass(frozen=True)
class EnergyModel:
    """Internal energy per unit mass with a declared argument signature.

    ``analytic_stress`` optionally returns closed-form derivatives as a dict
    ``slot -> ∂e/∂slot``; tests compare it with the perturbation derivative.
    """

    signature: str
    evaluate: Callable
    analytic_stress: Optional[Callable] = None
    name: str = "custom"
    coeffs: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.signature not in METRIC_SLOTS:
            raise ValueError(f"unknown signature {self.signature!r}")

    def __call__(self, args: Mapping) -> np.ndarray:
        e = np.asarray(self.evaluate(args), dtype=float)
        if not np.all(np.isfinite(e)):
            raise NonFiniteEnergy(f"model {self.name!r} returned non-finite energy")
        return e


# =============================================================================
# Perturbation derivatives
# =============================================================================

def _shifted(args: Mapping, key: str, index: tuple, delta: np.ndarray, mirror: bool = False) -> dict:
    out = dict(args)
    arr = np.array(args[key], dtype=float, copy=True)
    arr[(Ellipsis,) + index] += delta
    if mirror and index[0] != index[1]:
        arr[(Ellipsis,) + index[::-1]] += delta
    out[key] = arr
    return out


def slot_derivative(fn: Callable, args: Mapping, key: str, eps: float = EPS) -> np.ndarray:
    """Componentwise central-difference derivative of ``fn`` w.r.t. ``args[key]``.

    The step for each component is ``eps * (1 + |value|)``. The batch shape
    of ``fn``'s output must be a prefix of the slot's shape.
    """
    base = np.asarray(args[key], dtype=float)
    e0 = np.asarray(fn(args))
    comp_shape = base.shape[e0.ndim:]
    out = np.zeros(base.shape)
    for index in np.ndindex(*comp_shape):
        h = eps * (1.0 + np.abs(base[(Ellipsis,) + index]))
        up = np.asarray(fn(_shifted(args, key, index, h)))
        dn = np.asarray(fn(_shifted(args, key, index, -h)))
        out[(Ellipsis,) + index] = (up - dn) / (2.0 * h)
    if not np.all(np.isfinite(out)):
        raise NonFiniteEnergy(f"non-finite derivative with respect to {key!r}")
    return out


def _symmetric_pass(fn, args, key, eps):
    base = np.asarray(args[key], dtype=float)
    n = base.shape[-1]
    out = np.zeros(base.shape)
    for a in range(n):
        for b in range(a, n):
            h = eps * (1.0 + np.abs(base[..., a, b]))
            up = np.asarray(fn(_shifted(args, key, (a, b), h, mirror=True)))
            dn = np.asarray(fn(_shifted(args, key, (a, b), -h, mirror=True)))
            d = (up - dn) / (2.0 * h)
            if a != b:
                d = 0.5 * d
            out[..., a, b] = d
            out[..., b, a] = d
    return out


def symmetric_slot_derivative(fn: Callable, args: Mapping, key: str, eps: float = EPS,
                              tol: float = RICHARDSON_TOL) -> np.ndarray:
    """Symmetric gradient w.r.t. a symmetric matrix slot.

    Two step sizes are evaluated; when they disagree by more than ``tol``
    (relative to the derivative scale) the Richardson combination is returned.
    """
    d1 = _symmetric_pass(fn, args, key, eps)
    d2 = _symmetric_pass(fn, args, key, 0.5 * eps)
    if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
        raise NonFiniteEnergy(f"non-finite derivative with respect to {key!r}")
    scale = max(1.0, float(np.abs(d2).max(initial=0.0)))
    if np.abs(d1 - d2).max(initial=0.0) > tol * scale:
        return (4.0 * d2 - d1) / 3.0
    return d1


def metric_derivative(model: EnergyModel, args: Mapping, which: str) -> np.ndarray:
    """∂e/∂g_ab for the metric slot ``which``; exactly symmetric."""
    if which not in METRIC_SLOTS[model.signature]:
        raise SlotNotInSignature(f"slot {which!r} is not a metric slot of signature {model.signature!r}")
    if which not in args:
        raise SlotNotInSignature(f"argument {which!r} not supplied")
    return symmetric_slot_derivative(model, args, which)


def connection_derivative(model: EnergyModel, args: Mapping, eps: float = EPS) -> np.ndarray:
    """∂e/∂Γ^a_{bc}, each coefficient perturbed independently."""
    if model.signature != "scs":
        raise SlotNotInSignature("connection derivative needs an scs-signature model")
    return slot_derivative(model, args, "Gamma", eps)


# =============================================================================
# Argument assembly from deformed fields
# =============================================================================

def free_args(fields) -> dict:
    return dict(g=fields.g, g_M=fields.gM, F=fields.F, Ft=fields.Ft, G=fields.G, p=fields.p)


def scs_args(fields) -> dict:
    return dict(g=fields.g, p=fields.p, Gamma=fields.gamma, F=fields.F, G=fields.G)


def build_args(model: EnergyModel, fields, **extra) -> dict:
    if model.signature == "free":
        args = free_args(fields)
    elif model.signature == "scs":
        args = scs_args(fields)
    else:
        args = dict(g=fields.g, F=fields.F, G=fields.G)
    args.update(extra)
    return args


# =============================================================================
# Stresses
# =============================================================================

@dataclass(frozen=True)
class StressState:
    """Cauchy and micro-Cauchy stresses with optional Piola transforms."""

    cauchy: np.ndarray
    micro_cauchy: Optional[np.ndarray] = None
    piola: Optional[np.ndarray] = None
    micro_piola: Optional[np.ndarray] = None

    def replace(self, **changes) -> "StressState":
        kw = dict(cauchy=self.cauchy, micro_cauchy=self.micro_cauchy, piola=self.piola,
                  micro_piola=self.micro_piola)
        kw.update(changes)
        return StressState(**kw)


def doyle_ericksen_stress(model: EnergyModel, fields, args: Optional[Mapping] = None,
                          which: str = "g", rho: Optional[np.ndarray] = None) -> StressState:
    """σ = 2ρ ∂e/∂g."""
    args = build_args(model, fields) if args is None else args
    rho = fields.rho if rho is None else rho
    sigma = 2.0 * rho[..., None, None] * metric_derivative(model, args, which)
    return StressState(cauchy=sigma)


def skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def micro_stress_from_product(M: np.ndarray, F0: np.ndarray) -> np.ndarray:
    """Solve (F₀)^α_b σ̃^{βb} = M^{αβ} for σ̃."""
    det = np.linalg.det(F0)
    scale = np.abs(F0).max(axis=(-1, -2)) ** F0.shape[-1]
    if np.any(np.abs(det) <= 1e-12 * np.maximum(scale, 1e-300)):
        raise SingularF0("relative gradient F0 is not invertible")
    # σ̃ᵀ = F₀⁻¹ M
    return np.swapaxes(np.linalg.solve(F0, M), -1, -2)


def micro_product(sig_micro: np.ndarray, F0: np.ndarray) -> np.ndarray:
    """(F₀)^α_b σ̃^{βb}."""
    return np.einsum("...ab,...gb->...ag", F0, sig_micro)


def micro_doyle_ericksen_stress(model: EnergyModel, fields, args: Optional[Mapping] = None,
                                rho: Optional[np.ndarray] = None):
    """σ̃ from F₀σ̃ = 2ρ ∂e/∂g̃_M; returns (StressState, symmetry defect of F₀σ̃)."""
    args = build_args(model, fields) if args is None else args
    rho = fields.rho if rho is None else rho
    M = 2.0 * rho[..., None, None] * metric_derivative(model, args, "g_M")
    sig_m = micro_stress_from_product(M, fields.F0)
    defect = skew(micro_product(sig_m, fields.F0))
    return StressState(cauchy=np.zeros_like(fields.g), micro_cauchy=sig_m), defect


def _piola(t: np.ndarray, J: np.ndarray, Finv: np.ndarray) -> np.ndarray:
    if t.ndim == J.ndim + 1:
        return J[..., None] * np.einsum("...Ab,...b->...A", Finv, t)
    return J[..., None, None] * np.einsum("...ab,...Ab->...aA", t, Finv)


def _cauchy(P: np.ndarray, J: np.ndarray, F: np.ndarray) -> np.ndarray:
    if P.ndim == J.ndim + 1:
        return np.einsum("...A,...bA->...b", P, F) / J[..., None]
    return np.einsum("...aA,...bA->...ab", P, F) / J[..., None, None]


def piola_transform(stress: StressState, fields) -> StressState:
    """P^{aA} = J (F⁻¹)^A_b σ^{ab}, and the same for the micro stress."""
    P = _piola(stress.cauchy, fields.J, fields.Finv)
    Pm = None if stress.micro_cauchy is None else _piola(stress.micro_cauchy, fields.J, fields.Finv)
    return stress.replace(piola=P, micro_piola=Pm)


def cauchy_from_piola(stress: StressState, fields) -> StressState:
    """Inverse Piola transform σ^{ab} = J⁻¹ P^{aA} F^b_A."""
    sig = _cauchy(stress.piola, fields.J, fields.F)
    sig_m = None if stress.micro_piola is None else _cauchy(stress.micro_piola, fields.J, fields.F)
    return stress.replace(cauchy=sig, micro_cauchy=sig_m)


def traction(stress: StressState, normal: np.ndarray, g: np.ndarray, which: str = "macro") -> np.ndarray:
    """t^a = σ^{ab} g_bc n̂^c with n̂ the g-normalized ``normal``."""
    n = np.asarray(normal, dtype=float)
    norm = np.sqrt(np.einsum("...a,...ab,...b->...", n, g, n))
    if np.any(norm < 1e-300):
        raise ZeroNormal("normal has zero length")
    nhat = n / norm[..., None]
    sig = stress.cauchy if which == "macro" else stress.micro_cauchy
    if sig is None:
        raise ValueError(f"no {which} stress available")
    if which == "micro" and sig.ndim == nhat.ndim:
        return np.einsum("...b,...bc,...c->...", sig, g, nhat)
    return np.einsum("...ab,...bc,...c->...a", sig, g, nhat)


# =============================================================================
# Built-in model library
# =============================================================================

def _trace_pullback(Ginv, F, g):
    """tr(G⁻¹ Fᵀ g F)."""
    return np.einsum("...AB,...aA,...ab,...bB->...", Ginv, F, g, F)


def _push_inverse(F, Ginv):
    """F G⁻¹ Fᵀ (contravariant left Cauchy-Green type tensor)."""
    return np.einsum("...aA,...AB,...bB->...ab", F, Ginv, F)


def quadratic_free(c1=1.0, c2=0.5, c3=0.3, c4=0.1, c5=0.2) -> EnergyModel:
    """Quadratic energy in I = tr(G⁻¹C) and Ĩ = tr(G⁻¹F̃ᵀg̃F̃) with a director term.

    e = c1 (I − n) + ½ c2 (I − n)² + c3 (Ĩ − m) + c4 (I − n)(Ĩ − m) + ½ c5 g̃(p, p)
    """
    def parts(args):
        G = np.asarray(args["G"])
        Ginv = np.linalg.inv(G)
        n = G.shape[-1]
        m = np.asarray(args["g_M"]).shape[-1]
        I = _trace_pullback(Ginv, args["F"], args["g"]) - n
        It = _trace_pullback(Ginv, args["Ft"], args["g_M"]) - m
        return Ginv, I, It

    def evaluate(args):
        _, I, It = parts(args)
        q = 0.5 * np.einsum("...a,...ab,...b->...", args["p"], args["g_M"], args["p"])
        return c1 * I + 0.5 * c2 * I ** 2 + c3 * It + c4 * I * It + c5 * q

    def analytic(args):
        Ginv, I, It = parts(args)
        b = _push_inverse(args["F"], Ginv)
        bt = _push_inverse(args["Ft"], Ginv)
        p = np.asarray(args["p"])
        dg = (c1 + c2 * I + c4 * It)[..., None, None] * b
        dgm = (c3 + c4 * I)[..., None, None] * bt + 0.5 * c5 * np.einsum("...a,...b->...ab", p, p)
        return {"g": dg, "g_M": dgm}

    return EnergyModel("free", evaluate, analytic, "quadratic_free",
                       dict(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5))


def scs_linear(c1=1.0, c2=0.5, cp=0.2, probe=None) -> EnergyModel:
    """Macro quadratic energy, a director norm term and a term linear in ∇.

    e = c1 (I − n) + ½ c2 (I − n)² + ½ cp g(p, p) + K_a^{bc} Γ^a_{bc}

    ``probe`` is the nodal coefficient array ``K[..., a, b, c]`` (zero if None).
    """
    def evaluate(args):
        G = np.asarray(args["G"])
        I = _trace_pullback(np.linalg.inv(G), args["F"], args["g"]) - G.shape[-1]
        q = 0.5 * np.einsum("...a,...ab,...b->...", args["p"], args["g"], args["p"])
        e = c1 * I + 0.5 * c2 * I ** 2 + cp * q
        if probe is not None:
            e = e + np.einsum("...abc,...abc->...", probe, args["Gamma"])
        return e

    def analytic(args):
        G = np.asarray(args["G"])
        Ginv = np.linalg.inv(G)
        I = _trace_pullback(Ginv, args["F"], args["g"]) - G.shape[-1]
        p = np.asarray(args["p"])
        dg = (c1 + c2 * I)[..., None, None] * _push_inverse(args["F"], Ginv)
        dg = dg + 0.5 * cp * np.einsum("...a,...b->...ab", p, p)
        dgam = np.zeros_like(np.asarray(args["Gamma"])) if probe is None else np.broadcast_to(
            probe, np.shape(args["Gamma"]))
        return {"g": dg, "Gamma": dgam}

    return EnergyModel("scs", evaluate, analytic, "scs_linear", dict(c1=c1, c2=c2, cp=cp))


def voids_quadratic(cF=1.0, cnu=1.0, cg=0.1, beta=0.0, nu_ref=0.8) -> EnergyModel:
    """Solid with voids; stored energy per reference volume divided by ρ₀.

    W = cF/8 (I − n)² + cν (ν − ν_ref)² + ½ cg g^{ab} (Tν)_a (Tν)_b + ½ β (ν − ν_ref)(I − n)

    Slots: ``g``, ``nu``, ``dnu`` (the covector Tν), ``F``, ``G``, ``rho0``.
    """
    def invariants(args):
        G = np.asarray(args["G"])
        Ginv = np.linalg.inv(G)
        I = _trace_pullback(Ginv, args["F"], args["g"]) - G.shape[-1]
        return Ginv, I

    def evaluate(args):
        _, I = invariants(args)
        ginv = np.linalg.inv(args["g"])
        dn = args["dnu"]
        grad2 = np.einsum("...a,...ab,...b->...", dn, ginv, dn)
        dnu = np.asarray(args["nu"]) - nu_ref
        W = cF / 8.0 * I ** 2 + cnu * dnu ** 2 + 0.5 * cg * grad2 + 0.5 * beta * dnu * I
        return W / np.asarray(args["rho0"])

    def analytic(args):
        Ginv, I = invariants(args)
        rho0 = np.asarray(args["rho0"])
        ginv = np.linalg.inv(args["g"])
        up = np.einsum("...ab,...b->...a", ginv, args["dnu"])
        dnu = np.asarray(args["nu"]) - nu_ref
        b = _push_inverse(args["F"], Ginv)
        dg = (cF / 4.0 * I + 0.5 * beta * dnu)[..., None, None] * b
        dg = dg - 0.5 * cg * np.einsum("...a,...b->...ab", up, up)
        return {"g": dg / rho0[..., None, None],
                "dnu": cg * up / rho0[..., None],
                "nu": (2.0 * cnu * dnu + 0.5 * beta * I) / rho0}

    return EnergyModel("voids", evaluate, analytic, "voids_quadratic",
                       dict(cF=cF, cnu=cnu, cg=cg, beta=beta, nu_ref=nu_ref))


def mixture_pair(k1=(1.0, 0.5), k2=(0.8, 0.3), coupling=0.2):
    """Two mixture energies with coupling ½c tr(g_i⁻¹ g_j) in each.

    e_i = k_i[0] (I_i − n) + ½ k_i[1] (I_i − n)² + ½ c tr(g_i⁻¹ g_j),
    I_i = tr(G⁻¹ F_iᵀ g_i F_i). Slots ``g1``, ``g2``, ``F1``, ``F2``, ``G``.
    """
    def make(i, k):
        a, b = ("g1", "g2") if i == 1 else ("g2", "g1")
        Fk = f"F{i}"

        def evaluate(args):
            G = np.asarray(args["G"])
            I = _trace_pullback(np.linalg.inv(G), args[Fk], args[a]) - G.shape[-1]
            cross = np.einsum("...ab,...ba->...", np.linalg.inv(args[a]), args[b])
            return k[0] * I + 0.5 * k[1] * I ** 2 + 0.5 * coupling * cross

        def analytic(args):
            G = np.asarray(args["G"])
            Ginv = np.linalg.inv(G)
            I = _trace_pullback(Ginv, args[Fk], args[a]) - G.shape[-1]
            ai = np.linalg.inv(args[a])
            own = (k[0] + k[1] * I)[..., None, None] * _push_inverse(args[Fk], Ginv)
            own = own - 0.5 * coupling * ai @ args[b] @ ai
            return {a: own, b: 0.5 * coupling * ai}

        return EnergyModel("mixture", evaluate, analytic, f"mixture_{i}",
                           dict(k=list(k), coupling=coupling))

    return make(1, k1), make(2, k2)


def material_linear(M, rho0, c=0.0) -> EnergyModel:
    """E(G) = −M^{AB} G_AB / (2ρ₀) + ½ c G_AB G_AB; ``M`` a symmetric nodal field."""
    M = np.asarray(M, dtype=float)
    rho0 = np.asarray(rho0, dtype=float)

    def evaluate(args):
        G = np.asarray(args["G"])
        return (-np.einsum("...AB,...AB->...", M, G) / (2.0 * rho0)
                + 0.5 * c * np.einsum("...AB,...AB->...", G, G))

    def analytic(args):
        return {"G": -M / (2.0 * rho0[..., None, None]) + c * np.asarray(args["G"])}

    return EnergyModel("material", evaluate, analytic, "material_linear", dict(c=c))


MODEL_FACTORIES = {
    "quadratic_free": quadratic_free,
    "scs_linear": scs_linear,
    "voids_quadratic": voids_quadratic,
}


def model_from_spec(spec: Mapping) -> EnergyModel:
    """Build a library model from ``{"model": name, "coeffs": {...}}``."""
    name = spec["model"]
    if name not in MODEL_FACTORIES:
        raise ValueError(f"unknown model {name!r}")
    return MODEL_FACTORIES[name](**dict(spec.get("coeffs", {})))
