"""Energy balance of a structured continuum under rigid flows of flat space.

The director is a vector of the ambient space, so a rigid translation leaves
it alone and a rigid rotation turns it with the ambient: at t₀ the director
velocity gains ``Ω p``. Micro inertia is ignored, as in the classical
rigid-flow argument, so the micro acceleration never enters.

Surface terms are evaluated through Piola fluxes on the reference box, with
face values averaged from the adjacent nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..constitutive import StressState
from ..errors import NonEuclideanChart
from ..geometry import christoffel
from .free import as_fields, residual_mass
from .quadrature import SubBody, flux_integral, volume_integral
from .report import BodyLoads, FlowSpec, loads_or_zero


@dataclass(frozen=True)
class GNRResult:
    defect: float
    supplied: float
    stored: float
    bracket_integral: Optional[float] = None
    bracket_skew: Optional[np.ndarray] = None


def _require_flat(fields) -> None:
    n = fields.state.ambient.dim
    if np.abs(fields.g - np.eye(n)).max() > 1e-14:
        raise NonEuclideanChart("rigid-flow experiments need a Cartesian Euclidean ambient chart")
    if np.abs(christoffel(fields.state.ambient, fields.x)).max() > 1e-12:
        raise NonEuclideanChart("ambient chart has non-vanishing Christoffel symbols")


def _piola_density(fields, T: np.ndarray) -> np.ndarray:
    """sqrt(det G) J (F⁻¹)^A_b T^{..b}: reference flux density of T's last index."""
    w = fields.J * np.sqrt(np.linalg.det(fields.G))
    if T.ndim == w.ndim + 1:
        return w[..., None] * np.einsum("...Ab,...b->...A", fields.Finv, T)
    return w[..., None, None] * np.einsum("...ab,...Ab->...aA", T, fields.Finv)


def micro_gradient_term(stress: StressState, fields) -> np.ndarray:
    """σ̃^{ac} p^b_{,c}."""
    return np.einsum("...ac,...bc->...ab", stress.micro_cauchy, fields.grad(fields.p))


def bracket(stress: StressState, fields, loads: BodyLoads) -> np.ndarray:
    """σ + (div σ̃) ⊗ p + σ̃·∇p + ρ b̃ ⊗ p, whose symmetry rigid rotations enforce."""
    p = fields.p
    bm = loads_or_zero(loads.b_micro, p.shape)
    div_m = fields.div(stress.micro_cauchy, (2, 0))
    return (stress.cauchy + np.einsum("...a,...b->...ab", div_m + fields.rho[..., None] * bm, p)
            + micro_gradient_term(stress, fields))


def gnr_experiment(state, stress: StressState, loads: BodyLoads, flow: FlowSpec,
                   box: Optional[SubBody] = None) -> GNRResult:
    """Supplied minus stored power difference between the flowed and original motion at t₀.

    supplied = ∫ρ b·w + ∮ t·w + ∫ρ b̃·Ωp + ∮ t̃·Ωp   (micro terms for rotations only)
    stored   = ∫ρ a·w + ∫ (L_v ρ)(v·w + ½|w|²)
    """
    fields = as_fields(state)
    _require_flat(fields)
    grid = fields.grid
    box = SubBody.interior(grid) if box is None else box
    if flow.kind not in ("rigid_translation", "rigid_rotation"):
        raise ValueError("rigid-flow experiment needs a rigid translation or rotation")
    x = fields.x
    w = flow.w(x)
    rho = fields.rho
    b = loads_or_zero(loads.b, x.shape)

    supplied = float(volume_integral(fields, rho * np.einsum("...a,...a->...", b, w), box))
    supplied += float(flux_integral(grid, np.einsum("...aA,...a->...A",
                                                    _piola_density(fields, stress.cauchy), w), box))
    stored = float(volume_integral(fields, rho * np.einsum("...a,...a->...", fields.a, w), box))
    mass_rate = residual_mass(fields)
    kin = np.einsum("...a,...a->...", fields.v, w) + 0.5 * np.einsum("...a,...a->...", w, w)
    stored += float(volume_integral(fields, mass_rate * kin, box))

    bracket_integral = None
    skew_part = None
    if flow.kind == "rigid_rotation" and fields.p is not None and stress.micro_cauchy is not None:
        om = np.asarray(flow.omega)
        wp = fields.p @ om.T
        bm = loads_or_zero(loads.b_micro, fields.p.shape)
        supplied += float(volume_integral(fields, rho * np.einsum("...a,...a->...", bm, wp), box))
        supplied += float(flux_integral(grid, np.einsum(
            "...aA,...a->...A", _piola_density(fields, stress.micro_cauchy), wp), box))
        K = bracket(stress, fields, loads)
        bracket_integral = float(volume_integral(fields, np.einsum("...ab,ab->...", K, om), box))
        skew_part = 0.5 * (K - np.swapaxes(K, -1, -2))
    return GNRResult(defect=supplied - stored, supplied=supplied, stored=stored,
                     bracket_integral=bracket_integral, bracket_skew=skew_part)
