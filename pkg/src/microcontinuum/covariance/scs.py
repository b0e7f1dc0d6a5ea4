"""Balance laws when the director is a tangent vector of the ambient space.

The energy depends on the ambient connection, so a spatial flow also drags
the connection and curvature enters linear momentum. The micro stress pairs
with the connection through the tensor

    S[a, b, c] = g_ae σ̃^{ec} p^b,

laid out like ∂e/∂Γ^a_{bc}; the connection identity states ρ ∂e/∂Γ = S.
Curvature contractions use the pairing documented in :mod:`geometry`.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..constitutive import EnergyModel, StressState, connection_derivative, metric_derivative, scs_args, skew
from ..geometry import curvature, levi_civita
from .free import as_fields, micro_inertia_force, residual_linear_momentum, residual_mass, residual_micro_inertia
from .report import DEFAULT_TOL, BalanceReport, BodyLoads, law, loads_or_zero


def scs_tensor(stress: StressState, fields) -> np.ndarray:
    """S[a, b, c] = g_ae σ̃^{ec} p^b."""
    return np.einsum("...ae,...ec,...b->...abc", fields.g, stress.micro_cauchy, fields.p)


def ambient_curvature(fields) -> np.ndarray:
    return curvature(levi_civita(fields.state.ambient), fields.x)


def curvature_force(D: np.ndarray, fields, R: Optional[np.ndarray] = None) -> np.ndarray:
    """Vector g^{de} D[a, b, c] R[a, b, e, c] for a connection-slot tensor D."""
    R = ambient_curvature(fields) if R is None else R
    low = np.einsum("...abc,...abdc->...d", D, R)
    return fields.raise_index(low)


def micro_director_force(fields, loads: BodyLoads) -> np.ndarray:
    """ρ (b̃ − j ã), a vector."""
    bm = loads_or_zero(loads.b_micro, fields.p.shape)
    return fields.rho[..., None] * bm - micro_inertia_force(fields)


def scs_rhs(stress: StressState, fields, loads: BodyLoads) -> np.ndarray:
    """σ + ρ(b̃ − jã) ⊗ p + (div σ̃) ⊗ p + σ̃^{ac} p^b_{|c}."""
    p = fields.p
    div_m = fields.div(stress.micro_cauchy, (2, 0))
    grad_p = fields.cov(p, (1, 0))
    return (stress.cauchy
            + np.einsum("...a,...b->...ab", micro_director_force(fields, loads) + div_m, p)
            + np.einsum("...ac,...bc->...ab", stress.micro_cauchy, grad_p))


def residual_scs_doyle_ericksen(stress: StressState, fields, loads: BodyLoads, model: EnergyModel,
                                args: Optional[dict] = None) -> np.ndarray:
    """2ρ ∂e/∂g minus the right-hand side :func:`scs_rhs`."""
    fields = as_fields(fields)
    args = scs_args(fields) if args is None else args
    dedg = metric_derivative(model, args, "g")
    return 2.0 * fields.rho[..., None, None] * dedg - scs_rhs(stress, fields, loads)


def residual_scs_angular(stress: StressState, fields, loads: BodyLoads) -> np.ndarray:
    """Skew part of :func:`scs_rhs`."""
    return skew(scs_rhs(stress, as_fields(fields), loads))


def residual_scs_linear_momentum(stress: StressState, fields, loads: BodyLoads,
                                 model: Optional[EnergyModel] = None, form: str = "combined",
                                 include_curvature: bool = True,
                                 R: Optional[np.ndarray] = None) -> np.ndarray:
    """div σ + ρb − ρa − (curvature force).

    ``form="combined"`` builds the curvature force from σ̃ ⊗ p, ``form="raw"``
    from ρ ∂e/∂Γ of ``model``.
    """
    fields = as_fields(fields)
    out = residual_linear_momentum(stress, fields, loads)
    if not include_curvature:
        return out
    if form == "combined":
        D = scs_tensor(stress, fields)
    elif form == "raw":
        if model is None:
            raise ValueError("the raw form needs the energy model")
        D = fields.rho[..., None, None, None] * connection_derivative(model, scs_args(fields))
    else:
        raise ValueError(f"unknown form {form!r}")
    return out - curvature_force(D, fields, R)


def residual_connection_identity(stress: StressState, fields, model: EnergyModel) -> np.ndarray:
    """ρ ∂e/∂Γ − S."""
    fields = as_fields(fields)
    D = connection_derivative(model, scs_args(fields))
    return fields.rho[..., None, None, None] * D - scs_tensor(stress, fields)


def residual_micro_tensor_momentum(stress: StressState, fields, loads: BodyLoads) -> np.ndarray:
    """div(σ̃ ⊗ p) + ρ(b̃ − jã) ⊗ p, with div over σ̃'s spatial index."""
    fields = as_fields(fields)
    p = fields.p
    div_m = fields.div(stress.micro_cauchy, (2, 0))
    grad_p = fields.cov(p, (1, 0))
    return (np.einsum("...a,...b->...ab", div_m + micro_director_force(fields, loads), p)
            + np.einsum("...ac,...bc->...ab", stress.micro_cauchy, grad_p))


def residual_generalized_covariance(stress: StressState, fields, loads: BodyLoads,
                                    model: EnergyModel) -> dict:
    """Residuals of the laws obtained from independent macro and micro flows."""
    fields = as_fields(fields)
    dedg = metric_derivative(model, scs_args(fields), "g")
    return {
        "momentum": residual_scs_linear_momentum(stress, fields, loads, model, form="raw"),
        "doyle_ericksen": 2.0 * fields.rho[..., None, None] * dedg - stress.cauchy,
        "angular_momentum": skew(stress.cauchy),
        "micro_tensor_momentum": residual_micro_tensor_momentum(stress, fields, loads),
        "connection_identity": residual_connection_identity(stress, fields, model),
    }


SCS_LAWS = ("mass", "micro_inertia", "scs_linear_momentum", "scs_doyle_ericksen", "scs_angular",
            "connection_identity")


def scs_balance_report(stress: StressState, state, loads: BodyLoads, model: EnergyModel,
                       tolerances: Optional[dict] = None) -> BalanceReport:
    fields = as_fields(state)
    tol = dict(tolerances or {})
    values = {
        "mass": residual_mass(fields),
        "micro_inertia": residual_micro_inertia(fields),
        "scs_linear_momentum": residual_scs_linear_momentum(stress, fields, loads, model),
        "scs_doyle_ericksen": residual_scs_doyle_ericksen(stress, fields, loads, model),
        "scs_angular": residual_scs_angular(stress, fields, loads),
        "connection_identity": residual_connection_identity(stress, fields, model),
    }
    mask = fields.interior
    h = fields.grid.cell_volume
    return BalanceReport(tuple(law(k, values[k], mask, h, tol.get(k, DEFAULT_TOL)) for k in SCS_LAWS))


def generalized_report(stress: StressState, state, loads: BodyLoads, model: EnergyModel,
                       tolerances: Optional[dict] = None) -> BalanceReport:
    fields = as_fields(state)
    tol = dict(tolerances or {})
    values = residual_generalized_covariance(stress, fields, loads, model)
    mask = fields.interior
    h = fields.grid.cell_volume
    return BalanceReport(tuple(law(k, v, mask, h, tol.get(k, DEFAULT_TOL)) for k, v in values.items()))
