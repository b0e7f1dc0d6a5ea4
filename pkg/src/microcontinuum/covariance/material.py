"""Material reframing: configurational stress, force and traction.

All material tensors are stored with upper indices. For a two-point tensor
``P^{aA}`` the material transpose product is

    (FᵀP)^{BA} = G^{BC} F^b_C g_ab P^{aA},

and similarly for the micro Piola stress with g̃. Divergences of two-point
tensors carry the spatial Christoffel term γ^a_{bc} F^c_A as well as the
material one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..constitutive import EnergyModel, StressState, metric_derivative, piola_transform
from ..errors import SlotNotInSignature
from ..geometry import christoffel
from .free import as_fields
from .quadrature import SubBody, box_faces
from .report import DEFAULT_TOL, BalanceReport, law


@dataclass(frozen=True)
class MaterialTensors:
    P0: np.ndarray
    B0: np.ndarray
    T0: dict
    transposed_stress: np.ndarray
    divergence_defect: np.ndarray


def material_divergence(T: np.ndarray, fields, gamma_ref: np.ndarray) -> np.ndarray:
    """Div of a material (2,0) tensor T^{CA} over its last index."""
    dT = fields.grid.gradient(T)
    return (np.einsum("...CAA->...C", dT) + np.einsum("...CAD,...DA->...C", gamma_ref, T)
            + np.einsum("...AAD,...CD->...C", gamma_ref, T))


def two_point_divergence(P: np.ndarray, F: np.ndarray, gamma_sp: np.ndarray, fields,
                         gamma_ref: np.ndarray) -> np.ndarray:
    """Div P^{aA} = ∂_A P^{aA} + γ^a_{bc} F^c_A P^{bA} + Γ^A_{AD} P^{aD}."""
    dP = fields.grid.gradient(P)
    return (np.einsum("...aAA->...a", dP) + np.einsum("...abc,...cA,...bA->...a", gamma_sp, F, P)
            + np.einsum("...AAD,...aD->...a", gamma_ref, P))


def transposed_product(P: np.ndarray, F: np.ndarray, g: np.ndarray, Ginv: np.ndarray) -> np.ndarray:
    """G^{BC} F^b_C g_ab P^{aA}."""
    return np.einsum("...BC,...bC,...ab,...aA->...BA", Ginv, F, g, P)


def _material_args(fields) -> dict:
    return {"G": fields.G, "X": fields.state.body.nodes}


def material_transform_tensors(state, stress: StressState, model: EnergyModel,
                               box: Optional[SubBody] = None) -> MaterialTensors:
    """P₀ = 2ρ₀ ∂E/∂G + FᵀP + F̃ᵀP̃, B₀ and the face tractions T₀ = ⟨P₀, N̂⟩."""
    if model.signature != "material":
        raise SlotNotInSignature("material transform needs a material-signature energy")
    fields = as_fields(state)
    if stress.piola is None:
        stress = piola_transform(stress, fields)
    G = fields.G
    Ginv = np.linalg.inv(G)
    gam_ref = christoffel(fields.state.body.chart, fields.state.body.nodes)
    rho0 = fields.state.body.density0

    P = stress.piola
    Pt = transposed_product(P, fields.F, fields.g, Ginv)
    divP = two_point_divergence(P, fields.F, fields.gamma, fields, gam_ref)
    force = np.einsum("...bB,...ab,...a->...B", fields.F, fields.g, divP)
    if stress.micro_piola is not None:
        Pm = stress.micro_piola
        Pt = Pt + transposed_product(Pm, fields.Ft, fields.gM, Ginv)
        divPm = two_point_divergence(Pm, fields.Ft, fields.gammaM, fields, gam_ref)
        force = force + np.einsum("...bB,...ab,...a->...B", fields.Ft, fields.gM, divPm)

    dEdG = metric_derivative(model, _material_args(fields), "G")
    P0 = 2.0 * rho0[..., None, None] * dEdG + Pt
    B0 = np.einsum("...BC,...C->...B", G, material_divergence(Pt - P0, fields, gam_ref)) - force
    defect = np.einsum("...BC,...C->...B", G, material_divergence(Pt, fields, gam_ref)) - force

    box = SubBody.interior(fields.grid) if box is None else box
    T0 = {}
    for axis, side, sl in box_faces(fields.grid, box):
        Gi = Ginv[sl]
        # unit covector normal ±dX^axis / |dX^axis|_G
        N = np.zeros(Gi.shape[:-1])
        N[..., axis] = side / np.sqrt(Gi[..., axis, axis])
        T0[(axis, side)] = np.einsum("...BA,...A->...B", P0[sl], N)
    return MaterialTensors(P0=P0, B0=B0, T0=T0, transposed_stress=Pt, divergence_defect=defect)


MATERIAL_LAWS = ("material_stress", "material_force")


def material_covariance_conditions(state, stress: StressState, model: EnergyModel,
                                   tolerances: Optional[dict] = None) -> BalanceReport:
    """Residuals of P₀ = 0 and Div(FᵀP + F̃ᵀP̃) − FᵀDiv P − F̃ᵀDiv P̃ = 0."""
    fields = as_fields(state)
    mt = material_transform_tensors(fields, stress, model)
    tol = dict(tolerances or {})
    mask = fields.interior
    h = fields.grid.cell_volume
    return BalanceReport((
        law("material_stress", mt.P0, mask, h, tol.get("material_stress", DEFAULT_TOL)),
        law("material_force", mt.divergence_defect, mask, h, tol.get("material_force", DEFAULT_TOL)),
    ))
