"""Independent oracles built with sympy and plain ODE integration.

None of this imports the finite-difference machinery under test: metrics,
Christoffel symbols and generator derivatives come from symbolic
differentiation, and flows are integrated with classical RK4 together with
their first and second variational equations.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

X, Y = sp.symbols("x y", real=True)
COORDS = (X, Y)

CHART_METRICS = {
    "flat": sp.Matrix([[1, 0], [0, 1]]),
    "polar": sp.Matrix([[1, 0], [0, X ** 2]]),
    "sphere": sp.Matrix([[1, 0], [0, sp.sin(X) ** 2]]),
}

GENERATORS = {
    "poly": sp.Matrix([sp.Rational(3, 10) + X * Y / 10, X ** 2 / 5 - Y / 10]),
    "trig": sp.Matrix([sp.sin(Y) / 5, sp.cos(X) / 10 + X * Y / 20]),
}

# sample points inside each chart's domain
CHART_POINTS = {
    "flat": np.array([[0.3, -0.4], [1.1, 0.7], [-0.6, 0.2]]),
    "polar": np.array([[0.9, 0.3], [1.4, -1.0], [1.1, 2.0]]),
    "sphere": np.array([[0.7, 0.3], [1.2, -1.0], [1.0, 2.0]]),
}


def _lam(expr):
    return sp.lambdify(COORDS, expr, "numpy")


def christoffel_expr(g: sp.Matrix):
    ginv = g.inv()
    n = g.shape[0]
    return [[[sp.simplify(sum(ginv[a, d] * (sp.diff(g[d, b], COORDS[c]) + sp.diff(g[d, c], COORDS[b])
                                            - sp.diff(g[b, c], COORDS[d])) for d in range(n)) / 2)
              for c in range(n)] for b in range(n)] for a in range(n)]


class SymbolicChart:
    def __init__(self, name: str):
        self.name = name
        self.g_expr = CHART_METRICS[name]
        self._g = _lam(self.g_expr)
        self._gam = _lam(christoffel_expr(self.g_expr))

    def metric(self, x):
        return np.array(self._g(*x), dtype=float).reshape(2, 2)

    def gamma(self, x):
        return np.array(self._gam(*x), dtype=float).reshape(2, 2, 2)


class SymbolicField:
    def __init__(self, name: str):
        w = GENERATORS[name]
        self.expr = w
        self._w = _lam(w)
        self._dw = _lam(w.jacobian(COORDS))
        self._ddw = _lam([[[sp.diff(w[a], COORDS[b], COORDS[c]) for c in range(2)] for b in range(2)]
                          for a in range(2)])

    def __call__(self, x):
        return np.array(self._w(*x), dtype=float).reshape(2)

    def jac(self, x):
        return np.array(self._dw(*x), dtype=float).reshape(2, 2)

    def hess(self, x):
        return np.array(self._ddw(*x), dtype=float).reshape(2, 2, 2)

    def numpy_field(self):
        """Vectorized components for the package's TensorField."""
        def comps(pts):
            pts = np.asarray(pts, dtype=float)
            out = np.stack(np.broadcast_arrays(*self._w(pts[..., 0], pts[..., 1])), axis=-1)
            return out.reshape(pts.shape[:-1] + (2,))
        return comps


def flow_with_variations(w: SymbolicField, x0, s: float, steps: int = 40):
    """ξ_s(x0), Dξ_s and D²ξ_s by RK4 on the augmented system."""
    def rhs(state):
        x, J, H = state
        Dw = w.jac(x)
        D2w = w.hess(x)
        dH = np.einsum("ae,ebc->abc", Dw, H) + np.einsum("aef,eb,fc->abc", D2w, J, J)
        return w(x), Dw @ J, dH

    state = (np.asarray(x0, dtype=float), np.eye(2), np.zeros((2, 2, 2)))
    h = s / steps
    for _ in range(steps):
        k1 = rhs(state)
        k2 = rhs(tuple(a + 0.5 * h * b for a, b in zip(state, k1)))
        k3 = rhs(tuple(a + 0.5 * h * b for a, b in zip(state, k2)))
        k4 = rhs(tuple(a + h * b for a, b in zip(state, k3)))
        state = tuple(a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
                      for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4))
    return state


def pulled_metric(chart: SymbolicChart, w: SymbolicField, x, s):
    xs, J, _ = flow_with_variations(w, x, s)
    return J.T @ chart.metric(xs) @ J


def pulled_connection(chart: SymbolicChart, w: SymbolicField, x, s):
    """(ξ_s^*∇)^a_bc = (Dξ⁻¹)^a_d [Γ^d_ef(ξ) Dξ^e_b Dξ^f_c + ∂_b∂_c ξ^d]."""
    xs, J, H = flow_with_variations(w, x, s)
    inner = np.einsum("def,eb,fc->dbc", chart.gamma(xs), J, J) + H
    return np.einsum("ad,dbc->abc", np.linalg.inv(J), inner)


def lie_metric_oracle(chart_name: str, field_name: str, x, s: float = 1e-4):
    """d/ds ξ_s^* g at s = 0 by a central difference of integrated pullbacks."""
    c, w = SymbolicChart(chart_name), SymbolicField(field_name)
    return (pulled_metric(c, w, x, s) - pulled_metric(c, w, x, -s)) / (2 * s)


def lie_connection_oracle(chart_name: str, field_name: str, x, s: float = 1e-4):
    c, w = SymbolicChart(chart_name), SymbolicField(field_name)
    return (pulled_connection(c, w, x, s) - pulled_connection(c, w, x, -s)) / (2 * s)


# -----------------------------------------------------------------------------
# Energy derivatives
# -----------------------------------------------------------------------------

def quadratic_free_metric_gradient(F, Ft, g, gM, G, p, c=(1.0, 0.5, 0.3, 0.1, 0.2)):
    """Symbolic ∂e/∂g and ∂e/∂g̃ of the quadratic free energy at one point.

    Metric entries are treated as independent symmetric variables and the
    off-diagonal derivative is halved, matching de = S^{ab} dg_ab.
    """
    c1, c2, c3, c4, c5 = c
    n = len(F)
    gs = sp.Matrix(n, n, lambda a, b: sp.Symbol(f"g{min(a, b)}{max(a, b)}"))
    ms = sp.Matrix(n, n, lambda a, b: sp.Symbol(f"m{min(a, b)}{max(a, b)}"))
    Fm, Ftm, Ginv = sp.Matrix(F), sp.Matrix(Ft), sp.Matrix(G).inv()
    pv = sp.Matrix(p)
    I = (Ginv * Fm.T * gs * Fm).trace() - n
    It = (Ginv * Ftm.T * ms * Ftm).trace() - n
    e = c1 * I + c2 * I ** 2 / 2 + c3 * It + c4 * I * It + c5 * (pv.T * ms * pv)[0, 0] / 2
    subs = {gs[a, b]: g[a][b] for a in range(n) for b in range(n)}
    subs.update({ms[a, b]: gM[a][b] for a in range(n) for b in range(n)})

    def grad(M):
        out = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                d = sp.diff(e, M[a, b]).subs(subs)
                out[a, b] = float(d) if a == b else float(d) / 2
        return out
    return grad(gs), grad(ms)


def voids_frequency(cnu: float, rho0: float, kappa: float) -> float:
    """Linearized uniform void oscillation: ρκ ν̈ = −2cν (ν − ν_ref) ⇒ ω = sqrt(2cν/(ρκ))."""
    nu, t = sp.symbols("nu t")
    omega = sp.symbols("omega", positive=True)
    # substitute ν = cos(ωt) into ρκν̈ + 2cν ν = 0 and solve for ω
    f = sp.cos(omega * t)
    eq = sp.simplify((rho0 * kappa * sp.diff(f, t, 2) + 2 * cnu * f) / f)
    return float(sp.solve(eq, omega)[0])
