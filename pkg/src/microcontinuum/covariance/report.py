"""Residual reports, body loads and flow generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class LawResult:
    name: str
    linf: float
    l2: float
    tol: float
    passed: bool
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return dict(law=self.name, Linf=self.linf, L2=self.l2, tol=self.tol, passed=self.passed)


def field_norms(values: np.ndarray, mask: np.ndarray, cell_volume: float) -> tuple:
    """(L∞, discrete L2) over masked nodes; components are combined per node."""
    v = np.asarray(values, dtype=float)[mask]
    if v.size == 0:
        return 0.0, 0.0
    per_node = np.sqrt(np.sum(v.reshape(len(v), -1) ** 2, axis=-1))
    if not np.all(np.isfinite(per_node)):
        return float("inf"), float("inf")
    return float(per_node.max()), float(np.sqrt(np.sum(per_node ** 2) * cell_volume))


def law(name: str, values, mask=None, cell_volume: float = 1.0, tol: float = DEFAULT_TOL,
        keep: bool = True) -> LawResult:
    """Norm a residual field (or scalar) into a LawResult."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 or mask is None:
        linf = float(np.abs(arr).max(initial=0.0))
        l2 = float(np.sqrt(np.sum(arr ** 2)))
    else:
        linf, l2 = field_norms(arr, mask, cell_volume)
    return LawResult(name, linf, l2, float(tol), bool(linf <= tol), arr if keep else None)


@dataclass(frozen=True)
class BalanceReport:
    """Ordered collection of law results; every law appears exactly once."""

    laws: tuple
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [r.name for r in self.laws]
        if len(set(names)) != len(names):
            raise ValueError("duplicate law names in report")
        object.__setattr__(self, "laws", tuple(self.laws))

    @property
    def names(self) -> list:
        return [r.name for r in self.laws]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.laws)

    @property
    def failures(self) -> list:
        return [r.name for r in self.laws if not r.passed]

    def __getitem__(self, name: str) -> LawResult:
        for r in self.laws:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def to_dict(self) -> dict:
        return dict(laws=[r.to_dict() for r in self.laws], passed=self.passed,
                    extras={k: _plain(v) for k, v in self.extras.items()})

    @classmethod
    def from_dict(cls, data: dict) -> "BalanceReport":
        laws = tuple(LawResult(d["law"], d["Linf"], d["L2"], d["tol"], d["passed"]) for d in data["laws"])
        return cls(laws, dict(data.get("extras", {})))

    def merged(self, other: "BalanceReport", prefix: str = "") -> "BalanceReport":
        renamed = tuple(LawResult(prefix + r.name, r.linf, r.l2, r.tol, r.passed, r.values)
                        for r in other.laws)
        extras = dict(self.extras)
        extras.update({prefix + k: v for k, v in other.extras.items()})
        return BalanceReport(self.laws + renamed, extras)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass(frozen=True)
class BodyLoads:
    """Prescribed body forces and heat data; accelerations come from the motion."""

    b: Optional[np.ndarray] = None
    b_micro: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def replace(self, **changes) -> "BodyLoads":
        kw = dict(b=self.b, b_micro=self.b_micro, r=self.r, h=self.h)
        kw.update(changes)
        return BodyLoads(**kw)


def loads_or_zero(arr, shape) -> np.ndarray:
    return np.zeros(shape) if arr is None else np.asarray(arr, dtype=float)


# =============================================================================
# Flow generators
# =============================================================================

FLOW_KINDS = ("rigid_translation", "rigid_rotation", "general_spatial", "micro", "material",
              "generalized_pair")


@dataclass(frozen=True)
class FlowSpec:
    """Generator of a one-parameter family of diffeomorphisms, identity at t₀.

    ``w``, ``z`` and ``W`` are callables on points of the ambient, micro and
    reference charts. Rigid flows also keep their parameters ``c`` / ``omega``.
    """

    kind: str
    w: Optional[Callable] = None
    z: Optional[Callable] = None
    W: Optional[Callable] = None
    c: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.omega is not None:
            om = np.asarray(self.omega, dtype=float)
            if not np.array_equal(om.T, -om):
                raise ValueError("rotation generator must be exactly skew-symmetric")


def rigid_translation(c) -> FlowSpec:
    c = np.asarray(c, dtype=float)
    return FlowSpec("rigid_translation", w=lambda x: np.broadcast_to(c, np.shape(x)).copy(), c=c)


def rigid_rotation(omega) -> FlowSpec:
    om = np.asarray(omega, dtype=float)
    return FlowSpec("rigid_rotation", w=lambda x: np.asarray(x) @ om.T, omega=om)


def skew_from(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a - a.T


def polynomial_field(coeffs: dict) -> Callable:
    """Vector field c + A x + ½ B(x, x) + ⅙ T(x, x, x) from a coefficient dict."""
    c = coeffs.get("c")
    A = coeffs.get("A")
    B = coeffs.get("B")
    T = coeffs.get("T")

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if c is not None:
            out = out + c
        if A is not None:
            out = out + x @ np.asarray(A).T
        if B is not None:
            out = out + 0.5 * np.einsum("abc,...b,...c->...a", B, x, x)
        if T is not None:
            out = out + np.einsum("abcd,...b,...c,...d->...a", T, x, x, x) / 6.0
        return out
    return fn


def random_polynomial_coeffs(rng: np.random.Generator, dim: int, degree: int = 2,
                             scale: float = 1.0) -> dict:
    keys = ["c", "A", "B", "T"][: degree + 1]
    shapes = {"c": (dim,), "A": (dim, dim), "B": (dim, dim, dim), "T": (dim,) * 4}
    out = {k: scale * rng.standard_normal(shapes[k]) for k in keys}
    if "B" in out:
        out["B"] = 0.5 * (out["B"] + np.swapaxes(out["B"], 1, 2))
    return out


def general_spatial(w: Callable) -> FlowSpec:
    return FlowSpec("general_spatial", w=w)


def micro_flow(z: Callable) -> FlowSpec:
    return FlowSpec("micro", z=z)


def material_flow(W: Callable) -> FlowSpec:
    return FlowSpec("material", W=W)
