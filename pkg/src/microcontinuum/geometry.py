"""Coordinate-chart Riemannian geometry.

Everything here works on a single coordinate chart. Points are arrays whose
last axis holds the coordinates, so a batch of points of shape ``(..., n)``
is accepted wherever a single point is.

Index layout
------------
Component arrays list upper indices first, then lower indices, in written
order. A covariant derivative appends the derivative index last:

* ``Dw[a, b]`` is ``w^a_{|b}``;
* ``DDw[a, b, c]`` is ``(w^a_{|b})_{|c}``, i.e. differentiate along ``b``
  first and then along ``c``.

Christoffel symbols ``gamma[a, b, c]`` are Γ^a_{bc} and curvature
``R[a, d, b, c]`` is

    R^a_{dbc} = ∂_b Γ^a_{cd} − ∂_c Γ^a_{bd} + Γ^a_{be} Γ^e_{cd} − Γ^a_{ce} Γ^e_{bd},

antisymmetric in ``(b, c)``. With the derivative order above, the Lie
derivative of a torsion-free connection is exactly

    (L_w ∇)^a_{bc} = w^a_{|b|c} + R^a_{bdc} w^d,

so the curvature term conventionally written ``R^a_{dbc} w^d`` is our
``R[a, b, d, c] * w[d]``. :func:`connection_contraction` uses the same
pairing, which is what closes the curvature-coupled momentum balance.

Finite differences
------------------
Analytic charts use 4th-order central stencils with step
``1e-5 * (1 + |x|)``. Quantities that need a derivative of a derivative
(curvature, second covariant derivatives) take both derivatives with the
larger step ``1e-3 * (1 + |x|)``; nesting two 1e-5 steps would amplify
round-off to ~1e-8. Grid-sampled charts use their own spacing with 2nd-order
stencils.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import PointOutsideChart, SingularMetric, ValenceMismatch

STEP = 1e-5
NESTED_STEP = 1e-3


# =============================================================================
# Rectilinear grids
# =============================================================================

@dataclass(frozen=True)
class Grid:
    """Rectilinear node set: ``origin + spacing * index`` along each axis."""

    origin: tuple
    spacing: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if not (len(self.origin) == len(self.spacing) == len(self.shape)):
            raise ValueError("origin, spacing and shape must have equal length")
        if min(self.shape) < 3:
            raise ValueError("grids need at least 3 nodes per axis")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, dim)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * (np.asarray(self.shape) - 1)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Partial derivatives of nodal values along the grid axes.

        ``f`` has shape ``(*shape, *k)``; the result has shape ``(*shape, *k, dim)``.
        Interior nodes get central differences, boundary nodes one-sided
        2nd-order stencils.
        """
        f = np.asarray(f, dtype=float)
        axes = tuple(range(self.dim))
        parts = np.gradient(f, *self.spacing, axis=axes, edge_order=2)
        if self.dim == 1:
            parts = [parts]
        return np.stack(parts, axis=-1)

    def interior_mask(self, width: int = 1) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(width, n - width) for n in self.shape)] = True
        return mask

    def is_interior(self, node) -> bool:
        return all(0 < i < n - 1 for i, n in zip(node, self.shape))


# =============================================================================
# Finite-difference stencils
# =============================================================================

def _expand(a: np.ndarray, ndim: int) -> np.ndarray:
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


def partials(f: Callable, x: np.ndarray, steps: np.ndarray, order: int = 4) -> np.ndarray:
    """Partial derivatives of ``f`` at points ``x``, derivative index last.

    ``steps`` has the shape of ``x`` (one step per point and coordinate).
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(steps, x.shape)
    n = x.shape[-1]
    cols = []
    for c in range(n):
        dx = np.zeros_like(x)
        dx[..., c] = steps[..., c]
        h = steps[..., c]
        if order == 4:
            diff = -f(x + 2 * dx) + 8 * f(x + dx) - 8 * f(x - dx) + f(x - 2 * dx)
            denom = 12 * h
        elif order == 2:
            diff = f(x + dx) - f(x - dx)
            denom = 2 * h
        else:
            raise ValueError("order must be 2 or 4")
        cols.append(diff / _expand(np.asarray(denom), diff.ndim))
    return np.stack(cols, axis=-1)


# =============================================================================
# Charts and connections
# =============================================================================

@dataclass(frozen=True)
class MetricChart:
    """A coordinate chart carrying a Riemannian metric.

    ``metric`` maps points ``(..., dim)`` to component arrays ``(..., dim, dim)``.
    ``domain`` optionally maps points to a boolean mask of admissible points.
    """

    dim: int
    metric: Callable
    metric_kind: str = "analytic"
    grid: Optional[Grid] = None
    name: str = "custom"
    domain: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.metric_kind not in ("analytic", "grid-sampled"):
            raise ValueError(f"unknown metric_kind {self.metric_kind!r}")

    # -- evaluation -----------------------------------------------------------
    def check_points(self, x: np.ndarray, margin: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise PointOutsideChart(f"point has {x.shape[-1]} coordinates, chart has {self.dim}")
        if not np.all(np.isfinite(x)):
            raise PointOutsideChart("non-finite coordinates")
        if self.domain is not None and not np.all(self.domain(x)):
            raise PointOutsideChart(f"point outside the domain of chart {self.name!r}")
        if self.grid is not None:
            lo = np.asarray(self.grid.origin)
            hi = self.grid.upper()
            m = 0.0 if margin is None else margin
            if np.any(x - m < lo - 1e-12) or np.any(x + m > hi + 1e-12):
                raise PointOutsideChart(f"point outside the hull of grid chart {self.name!r}")
        return x

    def metric_at(self, x: np.ndarray) -> np.ndarray:
        """Validated metric components; raises SingularMetric if not SPD."""
        x = self.check_points(x)
        g = np.asarray(self.metric(x), dtype=float)
        g = np.broadcast_to(g, x.shape[:-1] + (self.dim, self.dim))
        scale = np.maximum(1.0, np.abs(g).max(axis=(-1, -2), keepdims=True))
        if np.any(np.abs(g - np.swapaxes(g, -1, -2)) > 1e-14 * scale):
            raise SingularMetric("metric is not symmetric")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(f"metric not positive definite on chart {self.name!r}") from exc
        return g

    def inverse_at(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.metric_at(x))

    # -- stencil policy -------------------------------------------------------
    @property
    def fd_order(self) -> int:
        return 2 if self.metric_kind == "grid-sampled" else 4

    def fd_steps(self, x: np.ndarray, nested: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.metric_kind == "grid-sampled":
            return np.broadcast_to(np.asarray(self.grid.spacing), x.shape)
        return (NESTED_STEP if nested else STEP) * (1.0 + np.abs(x))


@dataclass(frozen=True)
class Connection:
    """Affine connection given by its coefficient field Γ^a_{bc}.

    Levi-Civita connections are built with :func:`levi_civita`; they keep a
    reference to their chart so derivatives of Γ use the chart's stencils.
    """

    coefficients: Callable
    torsion_free: bool = True
    metric_compatible_with: Optional[MetricChart] = None
    chart: Optional[MetricChart] = None
    levi_civita_of: Optional[MetricChart] = None

    def gamma(self, x: np.ndarray, nested: bool = False) -> np.ndarray:
        if self.levi_civita_of is not None:
            return christoffel(self.levi_civita_of, x, nested=nested)
        g = np.asarray(self.coefficients(np.asarray(x, dtype=float)), dtype=float)
        if self.torsion_free and np.any(np.abs(g - np.swapaxes(g, -1, -2)) > 1e-12):
            raise ValueError("connection flagged torsion-free has non-symmetric coefficients")
        return g

    def fd_steps(self, x, nested=False):
        chart = self.chart or self.levi_civita_of
        if chart is not None:
            return chart.fd_steps(x, nested)
        return (NESTED_STEP if nested else STEP) * (1.0 + np.abs(np.asarray(x, dtype=float)))

    @property
    def fd_order(self) -> int:
        chart = self.chart or self.levi_civita_of
        return chart.fd_order if chart is not None else 4


@dataclass(frozen=True)
class TensorField:
    """Component field of valence ``(r, s)``: ``r`` upper indices, then ``s`` lower."""

    valence: tuple
    components: Callable
    chart: Optional[MetricChart] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.components(x), dtype=float)
        r, s = self.valence
        n = x.shape[-1]
        want = x.shape[:-1] + (n,) * (r + s)
        k = r + s
        if k and out.shape[out.ndim - k:] != (n,) * k:
            raise ValueError(f"component shape {out.shape} does not match valence {self.valence}")
        if out.shape != want:
            try:
                out = np.broadcast_to(out, want)
            except ValueError:
                raise ValueError(f"component shape {out.shape} does not match valence {self.valence}")
        return out


def levi_civita(chart: MetricChart) -> Connection:
    return Connection(coefficients=lambda x: christoffel(chart, x), torsion_free=True,
                      metric_compatible_with=chart, chart=chart, levi_civita_of=chart)


# =============================================================================
# Built-in charts
# =============================================================================

def euclidean(dim: int) -> MetricChart:
    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim)).copy()
    return MetricChart(dim=dim, metric=metric, name="euclidean")


def polar() -> MetricChart:
    """Plane in polar coordinates ``(r, θ)``: g = diag(1, r²)."""
    def metric(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = x[..., 0] ** 2
        return g
    return MetricChart(dim=2, metric=metric, name="polar", domain=lambda x: x[..., 0] > 0)


def sphere(radius: float = 1.0) -> MetricChart:
    """Round sphere in coordinates ``(θ, φ)``: g = R² diag(1, sin²θ)."""
    r2 = radius ** 2

    def metric(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = r2
        g[..., 1, 1] = r2 * np.sin(x[..., 0]) ** 2
        return g
    return MetricChart(dim=2, metric=metric, name="sphere",
                       domain=lambda x: (x[..., 0] > 0) & (x[..., 0] < np.pi))


def constant_metric(matrix) -> MetricChart:
    """Flat chart with a constant (not necessarily identity) metric."""
    m = np.array(matrix, dtype=float)
    dim = m.shape[0]

    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(m, x.shape[:-1] + (dim, dim)).copy()
    return MetricChart(dim=dim, metric=metric, name="constant")


def grid_sampled(grid: Grid, values: np.ndarray, name: str = "grid") -> MetricChart:
    """Chart whose metric is sampled at grid nodes and interpolated multilinearly.

    Interpolation is exact at nodes; derivatives use 2nd-order stencils with
    the grid spacing.
    """
    values = np.asarray(values, dtype=float)
    dim = grid.dim
    if values.shape != grid.shape + (dim, dim):
        raise ValueError("metric samples must have shape (*grid.shape, dim, dim)")
    interp = RegularGridInterpolator(grid.axes(), values, method="linear", bounds_error=True)

    def metric(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, dim)
        out = interp(flat)
        out = 0.5 * (out + np.swapaxes(out, -1, -2))
        return out.reshape(x.shape[:-1] + (dim, dim))
    return MetricChart(dim=dim, metric=metric, metric_kind="grid-sampled", grid=grid, name=name)


# =============================================================================
# Christoffel symbols and curvature
# =============================================================================

def metric_partials(chart: MetricChart, x: np.ndarray, nested: bool = False) -> np.ndarray:
    """``dg[..., a, b, c] = ∂_c g_ab``."""
    x = np.asarray(x, dtype=float)
    steps = chart.fd_steps(x, nested)
    chart.check_points(x, margin=2 * steps if chart.fd_order == 4 else steps)
    return partials(chart.metric_at, x, steps, chart.fd_order)


def christoffel(chart: MetricChart, x: np.ndarray, nested: bool = False) -> np.ndarray:
    """Levi-Civita coefficients Γ^a_{bc} of ``chart`` at ``x``."""
    x = np.asarray(x, dtype=float)
    ginv = chart.inverse_at(x)
    dg = metric_partials(chart, x, nested)
    # term[d, b, c] = ∂_b g_dc + ∂_c g_db − ∂_d g_bc
    term = np.swapaxes(dg, -1, -2) + dg - np.moveaxis(dg, -1, -3)
    gam = 0.5 * np.einsum("...ad,...dbc->...abc", ginv, term)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def curvature(conn: Connection, x: np.ndarray) -> np.ndarray:
    """Curvature ``R[a, d, b, c]`` (see module docs), antisymmetric in ``(b, c)``."""
    x = np.asarray(x, dtype=float)
    gam = conn.gamma(x, nested=True)
    steps = conn.fd_steps(x, nested=True)
    dgam = partials(lambda y: conn.gamma(y, nested=True), x, steps, conn.fd_order)
    # dgam[a, b, c, e] = ∂_e Γ^a_bc
    term1 = np.einsum("...acdb->...adbc", dgam)
    term2 = np.einsum("...abdc->...adbc", dgam)
    quad = (np.einsum("...abe,...ecd->...adbc", gam, gam)
            - np.einsum("...ace,...ebd->...adbc", gam, gam))
    return term1 - term2 + quad


def connection_contraction(R: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Curvature term of the connection Lie derivative: ``R[a, b, d, c] w[d]``."""
    return np.einsum("...abdc,...d->...abc", R, w)


def gaussian_curvature(chart: MetricChart, x: np.ndarray) -> np.ndarray:
    """Gaussian curvature of a 2D chart, K = R_{1212} / det g."""
    if chart.dim != 2:
        raise ValueError("Gaussian curvature needs a 2D chart")
    R = curvature(levi_civita(chart), x)
    g = chart.metric_at(x)
    R_low = np.einsum("...ae,...edbc->...adbc", g, R)
    return R_low[..., 0, 1, 0, 1] / np.linalg.det(g)


# =============================================================================
# Covariant calculus
# =============================================================================

_LETTERS = "ijklmnopq"


def connection_terms(T: np.ndarray, gamma: np.ndarray, valence: tuple) -> np.ndarray:
    """Γ correction terms of a covariant derivative, derivative index last.

    ``T`` has shape ``(..., n^(r+s))`` and ``gamma`` ``(..., n, n, n)``; both
    batch shapes must agree. Upper indices get ``+Γ^a_{ec} T^{..e..}``,
    lower ones ``−Γ^e_{bc} T_{..e..}``.
    """
    r, s = valence
    k = r + s
    idx = _LETTERS[:k]
    out = np.zeros(T.shape + (gamma.shape[-1],))
    for p in range(k):
        sub = idx[:p] + "z" + idx[p + 1:]
        if p < r:
            out += np.einsum(f"...{idx[p]}zy,...{sub}->...{idx}y", gamma, T)
        else:
            out -= np.einsum(f"...z{idx[p]}y,...{sub}->...{idx}y", gamma, T)
    return out


def _check_valence(field_: TensorField, n: int, T: np.ndarray, batch: tuple):
    r, s = field_.valence
    if T.shape != batch + (n,) * (r + s):
        raise ValenceMismatch(f"components of shape {T.shape} do not fit valence {field_.valence}")


def covariant_derivative(field_: TensorField, conn: Connection, x: np.ndarray,
                         nested: bool = False) -> np.ndarray:
    """∇T at ``x``: partials plus one Γ term per index, derivative index last."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    try:
        T = field_(x)
    except ValueError as exc:
        raise ValenceMismatch(str(exc)) from exc
    _check_valence(field_, n, T, x.shape[:-1])
    steps = conn.fd_steps(x, nested)
    chart = conn.chart or conn.levi_civita_of
    if chart is not None:
        chart.check_points(x, margin=2 * steps if conn.fd_order == 4 else steps)
    dT = partials(field_, x, steps, conn.fd_order)
    return dT + connection_terms(T, conn.gamma(x, nested=nested), field_.valence)


def divergence(field_: TensorField, chart: MetricChart, x: np.ndarray) -> np.ndarray:
    """Contract the last upper index of ∇T with the derivative index."""
    r, s = field_.valence
    if r < 1:
        raise ValenceMismatch("divergence needs at least one upper index")
    D = covariant_derivative(field_, levi_civita(chart), x)
    k = r + s + 1
    return np.trace(D, axis1=D.ndim - k + r - 1, axis2=D.ndim - 1)


def lie_derivative_metric(w: TensorField, chart: MetricChart, x: np.ndarray) -> np.ndarray:
    """``w_{a|b} + w_{b|a}``; half of it is the rate-of-deformation tensor."""
    x = np.asarray(x, dtype=float)
    Dw = covariant_derivative(w, levi_civita(chart), x)
    low = np.einsum("...ae,...eb->...ab", chart.metric_at(x), Dw)
    return low + np.swapaxes(low, -1, -2)


def second_covariant_derivative(w: TensorField, conn: Connection, x: np.ndarray) -> np.ndarray:
    """``DDw[a, b, c] = (w^a_{|b})_{|c}`` using nested stencils."""
    inner = TensorField((1, 1), lambda y: covariant_derivative(w, conn, y, nested=True))
    return covariant_derivative(inner, conn, x, nested=True)


def lie_derivative_connection(w: TensorField, conn: Connection, chart: MetricChart,
                              x: np.ndarray) -> np.ndarray:
    """``(L_w ∇)^a_{bc} = w^a_{|b|c} + R^a_{bdc} w^d`` (pairing in module docs)."""
    if not conn.torsion_free:
        raise NotImplementedError("Lie derivative of a connection with torsion is not supported")
    x = np.asarray(x, dtype=float)
    chart.check_points(x)
    DDw = second_covariant_derivative(w, conn, x)
    return DDw + connection_contraction(curvature(conn, x), w(x))
