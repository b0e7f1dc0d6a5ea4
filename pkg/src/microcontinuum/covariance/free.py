"""Balance laws of a structured continuum with a free micro manifold.

Residuals are nodal fields on the reference grid; reports norm them over
interior nodes. The covariance experiments integrate the energy-balance
difference produced by a spatial (or micro) flow generator over a subbody
and split it into the terms that must vanish separately.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..constitutive import (EnergyModel, StressState, build_args, metric_derivative, micro_product,
                            skew)
from ..errors import MissingTimeLevel
from ..geometry import MetricChart, TensorField, covariant_derivative, levi_civita
from ..kinematics import DeformedFields, MotionState, spatial_fields
from .quadrature import SubBody, volume_integral
from .report import DEFAULT_TOL, BalanceReport, BodyLoads, FlowSpec, law, loads_or_zero


def as_fields(obj) -> DeformedFields:
    return spatial_fields(obj) if isinstance(obj, MotionState) else obj


# =============================================================================
# Pointwise residuals
# =============================================================================

def velocity_divergence(fields: DeformedFields) -> np.ndarray:
    if fields.v is None:
        raise MissingTimeLevel("velocity needs at least two time levels")
    return np.trace(fields.cov(fields.v, (1, 0)), axis1=-2, axis2=-1)


def residual_mass(fields: DeformedFields) -> np.ndarray:
    """Density Lie derivative: material rate of ρ plus ρ div v."""
    return fields.rho_rate + fields.rho * velocity_divergence(fields)


def residual_micro_inertia(fields: DeformedFields) -> np.ndarray:
    """Material rate of the micro-inertia j."""
    return fields.j_rate


def residual_linear_momentum(stress: StressState, fields: DeformedFields, loads: BodyLoads) -> np.ndarray:
    """div σ + ρ b − ρ a."""
    b = loads_or_zero(loads.b, fields.x.shape)
    return fields.div(stress.cauchy, (2, 0)) + fields.rho[..., None] * (b - fields.a)


def micro_inertia_force(fields: DeformedFields) -> np.ndarray:
    """ρ j ã (shape of the director)."""
    acc = fields.a_micro
    scale = fields.rho * fields.j
    return scale * acc if acc.ndim == scale.ndim else scale[..., None] * acc


def residual_micro_linear_momentum(stress: StressState, fields: DeformedFields,
                                   loads: BodyLoads) -> np.ndarray:
    """div σ̃ + ρ b̃ − ρ j ã."""
    inertia = micro_inertia_force(fields)
    bm = loads_or_zero(loads.b_micro, inertia.shape)
    rho = fields.rho if inertia.ndim == fields.rho.ndim else fields.rho[..., None]
    return fields.micro_div(stress.micro_cauchy) + rho * bm - inertia


def residual_angular_free(stress: StressState, fields: DeformedFields) -> tuple:
    """Skew parts of σ and of F₀σ̃."""
    macro = skew(stress.cauchy)
    if stress.micro_cauchy is None:
        return macro, np.zeros_like(macro)
    return macro, skew(micro_product(stress.micro_cauchy, fields.F0))


def residual_doyle_ericksen(stress: StressState, fields: DeformedFields, model: EnergyModel,
                            args: Optional[dict] = None) -> np.ndarray:
    """σ − 2ρ ∂e/∂g."""
    args = build_args(model, fields) if args is None else args
    return stress.cauchy - 2.0 * fields.rho[..., None, None] * metric_derivative(model, args, "g")


def residual_micro_doyle_ericksen(stress: StressState, fields: DeformedFields, model: EnergyModel,
                                  args: Optional[dict] = None) -> np.ndarray:
    """F₀σ̃ − 2ρ ∂e/∂g̃."""
    args = build_args(model, fields) if args is None else args
    M = micro_product(stress.micro_cauchy, fields.F0)
    return M - 2.0 * fields.rho[..., None, None] * metric_derivative(model, args, "g_M")


FREE_LAWS = ("mass", "micro_inertia", "linear_momentum", "micro_linear_momentum", "angular_momentum",
             "micro_angular_momentum", "doyle_ericksen", "micro_doyle_ericksen")


def free_balance_report(stress: StressState, state, loads: BodyLoads, model: EnergyModel,
                        tolerances: Optional[dict] = None) -> BalanceReport:
    """All laws of the free-micro-manifold covariance theorem."""
    fields = as_fields(state)
    tol = dict(tolerances or {})
    args = build_args(model, fields)
    ang, micro_ang = residual_angular_free(stress, fields)
    values = {
        "mass": residual_mass(fields),
        "micro_inertia": residual_micro_inertia(fields),
        "linear_momentum": residual_linear_momentum(stress, fields, loads),
        "micro_linear_momentum": residual_micro_linear_momentum(stress, fields, loads),
        "angular_momentum": ang,
        "micro_angular_momentum": micro_ang,
        "doyle_ericksen": residual_doyle_ericksen(stress, fields, model, args),
        "micro_doyle_ericksen": residual_micro_doyle_ericksen(stress, fields, model, args),
    }
    mask = fields.interior
    h = fields.grid.cell_volume
    return BalanceReport(tuple(law(k, values[k], mask, h, tol.get(k, DEFAULT_TOL)) for k in FREE_LAWS))


# =============================================================================
# Flow generators evaluated at nodes
# =============================================================================

def generator_gradients(w, chart: MetricChart, x: np.ndarray) -> tuple:
    """(w, half Lie derivative of the metric, spin) of a vector field at points ``x``.

    The spin is ω_ab = ½ (w_{a|b} − w_{b|a}).
    """
    field_ = TensorField((1, 0), w, chart)
    wv = field_(x)
    Dw = covariant_derivative(field_, levi_civita(chart), x)
    low = np.einsum("...ae,...eb->...ab", chart.metric_at(x), Dw)
    return wv, 0.5 * (low + np.swapaxes(low, -1, -2)), 0.5 * (low - np.swapaxes(low, -1, -2))


def _contract(a, b):
    return np.einsum("...ab,...ab->...", a, b)


def spatial_covariance_experiment(state, stress: StressState, loads: BodyLoads, model: EnergyModel,
                                  flow: FlowSpec, box: Optional[SubBody] = None,
                                  tol: float = DEFAULT_TOL) -> BalanceReport:
    """Energy-balance difference under a spatial flow, split into its terms.

    Integrates over the subbody
        (2ρ ∂e/∂g − σ) : ½ L_w g  +  σ : ω  −  ⟨div σ + ρ(b − a), w⟩
    and reports each term and the total.
    """
    fields = as_fields(state)
    box = SubBody.interior(fields.grid) if box is None else box
    rho = fields.rho
    if flow.w is None:
        zero = np.zeros(fields.grid.shape)
        de = ang = mom = zero
    else:
        w, K, om = generator_gradients(flow.w, fields.state.ambient, fields.x)
        dedg = metric_derivative(model, build_args(model, fields), "g")
        de = _contract(2.0 * rho[..., None, None] * dedg - stress.cauchy, K)
        ang = _contract(stress.cauchy, om)
        mom = np.einsum("...a,...ab,...b->...", residual_linear_momentum(stress, fields, loads),
                        fields.g, w)
    terms = {k: float(volume_integral(fields, f, box))
             for k, f in (("doyle_ericksen_term", de), ("angular_term", ang), ("momentum_term", mom))}
    terms["total"] = terms["doyle_ericksen_term"] + terms["angular_term"] - terms["momentum_term"]
    return BalanceReport(tuple(law(k, v, tol=tol) for k, v in terms.items()), dict(terms))


def micro_covariance_experiment(state, stress: StressState, loads: BodyLoads, model: EnergyModel,
                                flow: FlowSpec, box: Optional[SubBody] = None,
                                tol: float = DEFAULT_TOL) -> BalanceReport:
    """Energy-balance difference under a micro flow ``z`` acting on director values.

    Integrates (2ρ ∂e/∂g̃ − F₀σ̃) : ½ L_z g̃ + F₀σ̃ : ω̃ − ⟨div σ̃ + ρ(b̃ − jã), z⟩_g̃.
    """
    fields = as_fields(state)
    box = SubBody.interior(fields.grid) if box is None else box
    rho = fields.rho
    if flow.z is None:
        zero = np.zeros(fields.grid.shape)
        de = ang = mom = zero
    else:
        z, K, om = generator_gradients(flow.z, fields.state.micro_chart, fields.p)
        M = micro_product(stress.micro_cauchy, fields.F0)
        dedgm = metric_derivative(model, build_args(model, fields), "g_M")
        de = _contract(2.0 * rho[..., None, None] * dedgm - M, K)
        ang = _contract(M, om)
        mom = np.einsum("...a,...ab,...b->...",
                        residual_micro_linear_momentum(stress, fields, loads), fields.gM, z)
    terms = {k: float(volume_integral(fields, f, box))
             for k, f in (("micro_doyle_ericksen_term", de), ("micro_angular_term", ang),
                          ("micro_momentum_term", mom))}
    terms["total"] = (terms["micro_doyle_ericksen_term"] + terms["micro_angular_term"]
                      - terms["micro_momentum_term"])
    return BalanceReport(tuple(law(k, v, tol=tol) for k, v in terms.items()), dict(terms))
