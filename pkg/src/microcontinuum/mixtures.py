"""Two-constituent mixtures sharing one ambient chart with two metrics.

Each constituent carries its own motion, density, loads and stress, and its
motion maps into a chart with its own metric ``g_i``. Balance laws of a
constituent use its own metric; Doyle-Ericksen formulas couple the two
through the total energy ``e₁ + e₂``.

Evaluation happens at shared spatial points: at the current time level both
motions must place every reference node at the same chart position.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .constitutive import EnergyModel, StressState, metric_derivative, skew
from .covariance.free import residual_linear_momentum, residual_mass
from .covariance.report import DEFAULT_TOL, BalanceReport, BodyLoads, law
from .kinematics import DeformedFields, MotionState, spatial_fields

POSITION_TOL = 1e-12


@dataclass(frozen=True)
class Constituent:
    state: MotionState
    stress: StressState
    loads: BodyLoads = BodyLoads()


@dataclass(frozen=True)
class MixtureState:
    constituents: tuple
    volume_fractions: Optional[tuple] = None

    def __post_init__(self):
        cons = tuple(self.constituents)
        if len(cons) != 2:
            raise ValueError("a mixture has exactly two constituents")
        object.__setattr__(self, "constituents", cons)
        s1, s2 = (c.state for c in cons)
        if s1.ambient.dim != s2.ambient.dim:
            raise ValueError("constituent motions must map into charts of one dimension")
        if s1.body.grid != s2.body.grid:
            raise ValueError("constituents must share the reference grid")
        x1, x2 = s1.phi_now, s2.phi_now
        scale = 1.0 + float(np.abs(x1).max())
        if np.abs(x1 - x2).max() > POSITION_TOL * scale:
            raise ValueError("constituent motions disagree on the evaluation box at the current time")
        if self.volume_fractions is not None:
            nu1, nu2 = (np.asarray(v, dtype=float) for v in self.volume_fractions)
            if np.abs(nu1 + nu2 - 1.0).max() > 1e-12:
                raise ValueError("volume fractions must sum to one")

    def constituent(self, i: int) -> Constituent:
        if i not in (1, 2):
            raise ValueError("constituent index must be 1 or 2")
        return self.constituents[i - 1]

    def fields(self, i: int) -> DeformedFields:
        return spatial_fields(self.constituent(i).state)

    def total_density(self) -> np.ndarray:
        if self.volume_fractions is None:
            raise ValueError("total density needs volume fractions")
        nu1, nu2 = self.volume_fractions
        return nu1 * self.fields(1).rho + nu2 * self.fields(2).rho


def swap(mix: MixtureState) -> MixtureState:
    """Relabel constituents 1 ↔ 2."""
    vf = None if mix.volume_fractions is None else mix.volume_fractions[::-1]
    return MixtureState(mix.constituents[::-1], vf)


_SWAP_KEYS = {"g1": "g2", "g2": "g1", "F1": "F2", "F2": "F1"}


def _swap_args(args: dict) -> dict:
    return {_SWAP_KEYS.get(k, k): v for k, v in args.items()}


def swap_models(models: Sequence[EnergyModel]) -> tuple:
    """Energy pair seen by the relabeled mixture: slots 1 ↔ 2 exchanged and order reversed."""
    def relabel(m):
        return replace(m, evaluate=lambda args, _m=m: _m.evaluate(_swap_args(args)),
                       analytic_stress=None, name=f"{m.name}_swapped")
    m1, m2 = models
    return relabel(m2), relabel(m1)


def total_energy(models: Sequence[EnergyModel]) -> EnergyModel:
    m1, m2 = models
    return EnergyModel("mixture", lambda args: m1.evaluate(args) + m2.evaluate(args),
                       name=f"{m1.name}+{m2.name}")


def mixture_args(mix: MixtureState) -> dict:
    f1, f2 = mix.fields(1), mix.fields(2)
    return dict(g1=f1.g, g2=f2.g, F1=f1.F, F2=f2.F, G=f1.G)


def residual_constituent_mass(mix: MixtureState, i: int) -> np.ndarray:
    """Continuity of constituent i along its own velocity."""
    return residual_mass(mix.fields(i))


def residual_constituent_momentum(mix: MixtureState, i: int) -> np.ndarray:
    """div_i σ_i + ρ_i b_i − ρ_i a_i with constituent i's metric."""
    c = mix.constituent(i)
    return residual_linear_momentum(c.stress, mix.fields(i), c.loads)


def coupled_doyle_ericksen(mix: MixtureState, models: Sequence[EnergyModel]) -> tuple:
    """σ_i − 2ρ_i ∂(e₁ + e₂)/∂g_i for i = 1, 2."""
    total = total_energy(models)
    args = mixture_args(mix)
    out = []
    for i, slot in ((1, "g1"), (2, "g2")):
        rho = mix.fields(i).rho
        out.append(mix.constituent(i).stress.cauchy
                   - 2.0 * rho[..., None, None] * metric_derivative(total, args, slot))
    return tuple(out)


def coupled_stresses(mix_or_args, models: Sequence[EnergyModel], rhos: Sequence[np.ndarray]) -> tuple:
    """Cauchy stresses 2ρ_i ∂(e₁ + e₂)/∂g_i that make the coupled formulas exact."""
    args = mixture_args(mix_or_args) if isinstance(mix_or_args, MixtureState) else mix_or_args
    total = total_energy(models)
    return tuple(2.0 * r[..., None, None] * metric_derivative(total, args, slot)
                 for r, slot in zip(rhos, ("g1", "g2")))


MIXTURE_LAWS = ("mass_1", "mass_2", "momentum_1", "momentum_2", "doyle_ericksen_1",
                "doyle_ericksen_2", "angular_1", "angular_2")


def mixture_balance_report(mix: MixtureState, models: Sequence[EnergyModel],
                           tolerances: Optional[dict] = None) -> BalanceReport:
    tol = dict(tolerances or {})
    de1, de2 = coupled_doyle_ericksen(mix, models)
    values = {
        "mass_1": residual_constituent_mass(mix, 1),
        "mass_2": residual_constituent_mass(mix, 2),
        "momentum_1": residual_constituent_momentum(mix, 1),
        "momentum_2": residual_constituent_momentum(mix, 2),
        "doyle_ericksen_1": de1,
        "doyle_ericksen_2": de2,
        "angular_1": skew(mix.constituent(1).stress.cauchy),
        "angular_2": skew(mix.constituent(2).stress.cauchy),
    }
    f1 = mix.fields(1)
    mask, h = f1.interior, f1.grid.cell_volume
    return BalanceReport(tuple(law(k, values[k], mask, h, tol.get(k, DEFAULT_TOL)) for k in MIXTURE_LAWS))
