"""Closed-form metrics: exact components, Christoffels, curvature, and jets.

These are the preferred inputs for the pipeline.  Sampling onto a grid gives
the finite-difference path of the chart-frame operations; the exact pointwise
derivatives feed the rescaled frames and the seed recursion, where difference
noise would drown the small residuals being tracked.
"""

from __future__ import annotations

import numpy as np

from .expr import BinOp, Expr2, Num
from .grid import Grid
from .metric import MetricField

_IDX = ((0, 0), (0, 1), (1, 1))  # stored component order: g11, g12, g22


class AnalyticMetric:
    """Metric with expression-backed components in chart variables (u, v).

    Subclasses or factories may install closed-form christoffel and
    curvature callables; the generic tensor chain loses accuracy exactly
    where the curvature nearly vanishes (its terms cancel), and the mixed
    sign fixtures live there.
    """

    def __init__(self, g11, g12, g22, name="metric"):
        self.exprs = tuple(e if isinstance(e, Expr2) else Expr2(e) for e in (g11, g12, g22))
        self.name = name
        self._gamma_fn = None
        self._curvature_fn = None

    # -- pointwise data ------------------------------------------------------
    def comps(self, u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return tuple(np.broadcast_to(np.asarray(e(u, v), dtype=float), shape).copy()
                     for e in self.exprs)

    def dcomps(self, u, v, du, dv):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return tuple(
            np.broadcast_to(np.asarray(e.eval_deriv(du, dv, u, v), dtype=float), shape).copy()
            for e in self.exprs
        )

    def _tensors(self, u, v, order):
        """g[i,j], and partials dg[k,i,j], d2g[k,l,i,j] up to the given order."""
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        g = np.zeros((2, 2) + shape)
        for (i, j), val in zip(_IDX, self.comps(u, v)):
            g[i, j] = val
            g[j, i] = val
        out = [g]
        if order >= 1:
            dg = np.zeros((2, 2, 2) + shape)
            for k, (du_, dv_) in enumerate(((1, 0), (0, 1))):
                for (i, j), val in zip(_IDX, self.dcomps(u, v, du_, dv_)):
                    dg[k, i, j] = val
                    dg[k, j, i] = val
            out.append(dg)
        if order >= 2:
            d2g = np.zeros((2, 2, 2, 2) + shape)
            orders = {(0, 0): (2, 0), (0, 1): (1, 1), (1, 0): (1, 1), (1, 1): (0, 2)}
            for (k, l), (du_, dv_) in orders.items():
                for (i, j), val in zip(_IDX, self.dcomps(u, v, du_, dv_)):
                    d2g[k, l, i, j] = val
                    d2g[k, l, j, i] = val
            out.append(d2g)
        return out

    @staticmethod
    def _inverse(g):
        det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        inv = np.empty_like(g)
        inv[0, 0] = g[1, 1] / det
        inv[1, 1] = g[0, 0] / det
        inv[0, 1] = inv[1, 0] = -g[0, 1] / det
        return inv, det

    def gamma(self, u, v):
        """Exact Christoffel symbols, shape [l, i, j] + points."""
        if self._gamma_fn is not None:
            return self._gamma_fn(u, v)
        g, dg = self._tensors(u, v, 1)
        ginv, _ = self._inverse(g)
        gam = np.zeros_like(dg)
        for l in range(2):
            for i in range(2):
                for j in range(2):
                    acc = 0.0
                    for m in range(2):
                        acc = acc + ginv[l, m] * (dg[i, j, m] + dg[j, i, m] - dg[m, i, j])
                    gam[l, i, j] = 0.5 * acc
        return gam

    def curvature(self, u, v):
        """Exact Gaussian curvature K = R_1212 / det g."""
        if self._curvature_fn is not None:
            return self._curvature_fn(u, v)
        g, dg, d2g = self._tensors(u, v, 2)
        ginv, det = self._inverse(g)
        # dginv[k] = -ginv dg[k] ginv
        dginv = np.einsum("ab...,kbc...,cd...->kad...", ginv, dg, ginv) * -1.0
        gam = self.gamma(u, v)
        # dgam[k, l, i, j] = d_k Gamma^l_ij
        dgam = np.zeros_like(d2g)
        for k in range(2):
            for l in range(2):
                for i in range(2):
                    for j in range(2):
                        acc = 0.0
                        for m in range(2):
                            acc = acc + dginv[k, l, m] * (dg[i, j, m] + dg[j, i, m] - dg[m, i, j])
                            acc = acc + ginv[l, m] * (
                                d2g[k, i, j, m] + d2g[k, j, i, m] - d2g[k, m, i, j]
                            )
                        dgam[k, l, i, j] = 0.5 * acc
        # R^i_212 = d_1 Gamma^i_22 - d_2 Gamma^i_12 + G^i_1m G^m_22 - G^i_2m G^m_12
        r = []
        for i in range(2):
            term = dgam[0, i, 1, 1] - dgam[1, i, 0, 1]
            for m in range(2):
                term = term + gam[i, 0, m] * gam[m, 1, 1] - gam[i, 1, m] * gam[m, 0, 1]
            r.append(term)
        r1212 = g[0, 0] * r[0] + g[0, 1] * r[1]
        return r1212 / det

    # -- conversions ---------------------------------------------------------
    def sample(self, grid: Grid) -> MetricField:
        X1, X2 = grid.mesh()
        g11, g12, g22 = self.comps(X1, X2)
        return MetricField(grid, g11, g12, g22)

    def jets(self, cap, center=(0.0, 0.0)):
        return tuple(e.jet(cap, center) for e in self.exprs)

    def transformed(self, mat, name=None):
        """Pullback under the linear change of variables y_old = mat @ y_new."""
        return _LinearPullback(self, np.asarray(mat, dtype=float),
                               name or f"{self.name}~lin")


class _LinearPullback(AnalyticMetric):
    """AnalyticMetric composed with a linear coordinate change.

    Curvature is evaluated as the base value at the mapped point (a scalar
    invariant) and Christoffels by the exact tensor law; routing these
    through the generic component chain would lose the cancellation-heavy
    digits that the residual bookkeeping depends on.
    """

    def __init__(self, base, mat, name):
        self.base = base
        self.mat = mat
        self.name = name
        self._gamma_fn = None
        self._curvature_fn = None

    def _mapped(self, u, v):
        return self.mat[0, 0] * u + self.mat[0, 1] * v, self.mat[1, 0] * u + self.mat[1, 1] * v

    def gamma(self, u, v):
        uo, vo = self._mapped(u, v)
        base_gamma = self.base.gamma(uo, vo)
        Ainv = np.linalg.inv(self.mat)
        return np.einsum("cl,lij...,ia,jb->cab...", Ainv, base_gamma,
                         self.mat, self.mat)

    def curvature(self, u, v):
        uo, vo = self._mapped(u, v)
        return self.base.curvature(uo, vo)

    def comps(self, u, v):
        uo, vo = self._mapped(u, v)
        g = self.base._tensors(uo, vo, 0)[0]
        gp = np.einsum("ia,ij...,jb->ab...", self.mat, g, self.mat)
        return gp[0, 0], gp[0, 1], gp[1, 1]

    def dcomps(self, u, v, du, dv):
        uo, vo = self._mapped(u, v)
        order = du + dv
        if order == 0:
            return self.comps(u, v)
        tensors = self.base._tensors(uo, vo, order)
        A = self.mat
        if order == 1:
            dg = tensors[1]
            c = 0 if du == 1 else 1
            dgp = np.einsum("ia,kij...,jb,k->ab...", A, dg, A, A[:, c])
        elif order == 2:
            d2g = tensors[2]
            c = 0 if du == 2 else (1 if dv == 2 else None)
            if c is None:
                w1, w2 = A[:, 0], A[:, 1]
            else:
                w1 = w2 = A[:, c]
            dgp = np.einsum("ia,klij...,jb,k,l->ab...", A, d2g, A, w1, w2)
        else:
            raise NotImplementedError("linear pullback derivatives beyond order 2")
        return dgp[0, 0], dgp[0, 1], dgp[1, 1]

    def jets(self, cap, center=(0.0, 0.0)):
        if center != (0.0, 0.0):
            raise NotImplementedError("pullback jets only at the origin")
        base_jets = {}
        for (i, j), jet in zip(_IDX, self.base.jets(cap)):
            base_jets[(i, j)] = jet
            base_jets[(j, i)] = jet
        A = self.mat
        out = []
        for a, b in _IDX:
            acc = None
            for i in range(2):
                for j in range(2):
                    term = base_jets[(i, j)].compose_linear(A) * (A[i, a] * A[j, b])
                    acc = term if acc is None else acc + term
            out.append(acc)
        return tuple(out)


# --------------------------------------------------------------------------
# the catalog
# --------------------------------------------------------------------------
def flat_metric():
    return AnalyticMetric("1", "0", "1", name="flat")


def sphere_chart_metric(u0=1.0):
    """Round sphere away from the poles, chart centered at latitude u0."""
    return AnalyticMetric("1", "0", f"sin({u0} + u)^2", name="sphere-chart")


def polar_type_metric(r0=2.0):
    """Flat metric in polar-style coordinates on an annulus chart."""
    return AnalyticMetric("1", "0", f"({r0} + u)^2", name="polar-type")


def graph_metric(f_expr, name=None):
    """First fundamental form of the graph of F(u, v)."""
    F = f_expr if isinstance(f_expr, Expr2) else Expr2(f_expr)
    Fu = F.derivative(1, 0)
    Fv = F.derivative(0, 1)
    g11 = Expr2(BinOp("+", Num(1.0), BinOp("^", Fu.node, Num(2.0))).simplified())
    g12 = Expr2(BinOp("*", Fu.node, Fv.node).simplified())
    g22 = Expr2(BinOp("+", Num(1.0), BinOp("^", Fv.node, Num(2.0))).simplified())
    m = AnalyticMetric(g11, g12, g22, name=name or "graph")
    m.graph_height = F

    def gamma_fn(u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        grad = [F.eval_deriv(1, 0, u, v), F.eval_deriv(0, 1, u, v)]
        hess = [[F.eval_deriv(2, 0, u, v), F.eval_deriv(1, 1, u, v)],
                [F.eval_deriv(1, 1, u, v), F.eval_deriv(0, 2, u, v)]]
        w2 = 1.0 + grad[0] ** 2 + grad[1] ** 2
        out = np.zeros((2, 2, 2) + shape)
        for l in range(2):
            for i in range(2):
                for j in range(2):
                    out[l, i, j] = grad[l] * hess[i][j] / w2
        return out

    def curvature_fn(u, v):
        fu = F.eval_deriv(1, 0, u, v)
        fv = F.eval_deriv(0, 1, u, v)
        fuu = F.eval_deriv(2, 0, u, v)
        fuv = F.eval_deriv(1, 1, u, v)
        fvv = F.eval_deriv(0, 2, u, v)
        w2 = 1.0 + fu**2 + fv**2
        return (fuu * fvv - fuv**2) / w2**2

    m._gamma_fn = gamma_fn
    m._curvature_fn = curvature_fn
    return m


def graph_curvature(f_expr):
    """Closed-form K of a graph: det Hess F / (1 + |grad F|^2)^2."""
    F = f_expr if isinstance(f_expr, Expr2) else Expr2(f_expr)

    def K(u, v):
        fu = F.eval_deriv(1, 0, u, v)
        fv = F.eval_deriv(0, 1, u, v)
        fuu = F.eval_deriv(2, 0, u, v)
        fuv = F.eval_deriv(1, 1, u, v)
        fvv = F.eval_deriv(0, 2, u, v)
        w = 1.0 + fu**2 + fv**2
        return (fuu * fvv - fuv**2) / w**2

    return K


M1_HEIGHT = "u^2/2 + u*v^3/6"
M2_HEIGHT = "(u^3 + v^3)/6"


def m1_metric():
    """Mixed-sign fixture: graph of u^2/2 + u v^3/6 (curvature ~ uv near 0)."""
    return graph_metric(M1_HEIGHT, name="m1")


def m2_metric():
    """Second graph fixture: graph of (u^3 + v^3)/6 (curvature ~ uv near 0)."""
    return graph_metric(M2_HEIGHT, name="m2")


CATALOG = {
    "flat": flat_metric,
    "sphere": sphere_chart_metric,
    "polar-type": polar_type_metric,
    "m1": m1_metric,
    "m2": m2_metric,
}
