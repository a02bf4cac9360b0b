"""Polynomial approximate solution of the Darboux equation.

The seed z0 = (y1)^2 / 2 + sum of homogeneous corrections p_n is built so
that the Taylor expansion of the Monge-Ampere residual vanishes through
degree cap-2 at the origin.  All arithmetic is on exact truncated jets; the
recursion is solved degree by degree (the data line y2 = 0 is
noncharacteristic because the Hessian entry multiplying the new unknowns is
1 at the origin, which makes each degree a diagonal solve).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .catalog import AnalyticMetric
from .errors import SingularJetSystemError
from .grid import ScalarField, dn
from .jets import PolyJet

__all__ = [
    "MetricJet",
    "taylor_metric",
    "build_z0",
    "eval_jet",
    "residual_decay_order",
    "phi_jet",
]


@dataclass
class MetricJet:
    """Taylor data of the three metric components at the origin."""

    g11: PolyJet
    g12: PolyJet
    g22: PolyJet
    cap: int

    def __post_init__(self):
        det0 = self.g11.coef[0, 0] * self.g22.coef[0, 0] - self.g12.coef[0, 0] ** 2
        if self.g11.coef[0, 0] <= 0 or det0 <= 0:
            raise ValueError("metric jet is not positive definite at the origin")


def taylor_metric(metric, order) -> MetricJet:
    """Metric Taylor coefficients at the origin.

    Closed-form metrics evaluate on jets, which is exact.  Sampled metrics
    fall back to finite-difference extraction; that path amplifies roundoff
    like h^-order, so a condition estimate is checked and a warning issued
    when the requested order is not trustworthy.
    """
    if isinstance(metric, AnalyticMetric):
        j11, j12, j22 = metric.jets(order)
        return MetricJet(j11, j12, j22, order)

    # sampled-field path
    grid = metric.grid
    h1, h2 = grid.h
    i0, j0 = grid.origin_index()
    amplification = max(h1, h2) ** (-order) * np.finfo(float).eps
    if amplification > 1e-6:
        warnings.warn(
            f"finite-difference Taylor extraction to order {order} is ill conditioned "
            f"(noise estimate {amplification:.2e}); prefer a closed-form metric",
            stacklevel=2,
        )
    jets = []
    for comp in (metric.g11, metric.g12, metric.g22):
        j = PolyJet(order)
        for a in range(order + 1):
            for b in range(order + 1 - a):
                deriv = dn(dn(comp, h1, 0, a), h2, 1, b)
                j.coef[a, b] = deriv[i0, j0] / (math.factorial(a) * math.factorial(b))
        jets.append(j)
    return MetricJet(jets[0], jets[1], jets[2], order)


def _geometry_jets(gj: MetricJet):
    """Inverse metric, Christoffel, and lowered-curvature jets."""
    g = ((gj.g11, gj.g12), (gj.g12, gj.g22))
    det = gj.g11 * gj.g22 - gj.g12 * gj.g12
    inv_det = det.reciprocal()
    ginv = (
        (gj.g22 * inv_det, -1.0 * gj.g12 * inv_det),
        (-1.0 * gj.g12 * inv_det, gj.g11 * inv_det),
    )
    dg = [[[g[i][j].diff(k) for j in range(2)] for i in range(2)] for k in range(2)]
    gam = [[[None] * 2 for _ in range(2)] for _ in range(2)]
    for l in range(2):
        for i in range(2):
            for j in range(2):
                acc = PolyJet.constant(0.0, gj.cap)
                for m in range(2):
                    acc = acc + ginv[l][m] * (dg[i][j][m] + dg[j][i][m] - dg[m][i][j])
                gam[l][i][j] = acc * 0.5
    # R^i_212 = d1 G^i_22 - d2 G^i_12 + G^i_1m G^m_22 - G^i_2m G^m_12
    r_up = []
    for i in range(2):
        term = gam[i][1][1].diff(0) - gam[i][0][1].diff(1)
        for m in range(2):
            term = term + gam[i][0][m] * gam[m][1][1] - gam[i][1][m] * gam[m][0][1]
        r_up.append(term)
    r1212 = g[0][0] * r_up[0] + g[0][1] * r_up[1]
    return ginv, gam, r1212, det


def phi_jet(z: PolyJet, gj: MetricJet, geo=None) -> PolyJet:
    """Jet of the Monge-Ampere residual of z for the given metric jets."""
    if geo is None:
        geo = _geometry_jets(gj)
    ginv, gam, r1212, det = geo
    z1, z2 = z.diff(0), z.diff(1)
    zd = (z1, z2)
    H = {}
    H[(0, 0)] = z1.diff(0) - gam[0][0][0] * z1 - gam[1][0][0] * z2
    H[(0, 1)] = z1.diff(1) - gam[0][0][1] * z1 - gam[1][0][1] * z2
    H[(1, 1)] = z2.diff(1) - gam[0][1][1] * z1 - gam[1][1][1] * z2
    det_h = H[(0, 0)] * H[(1, 1)] - H[(0, 1)] * H[(0, 1)]
    grad2 = PolyJet.constant(0.0, gj.cap)
    for i in range(2):
        for j in range(2):
            grad2 = grad2 + ginv[i][j] * zd[i] * zd[j]
    # K |g| (1 - |grad z|^2) with K |g| = R_1212
    return det_h - r1212 * (1.0 - grad2)


def build_z0(gjet: MetricJet, cap) -> PolyJet:
    """Seed polynomial with residual vanishing through degree cap - 2.

    Each degree n determines the coefficients of p_n carrying a (y2)^2
    factor from the degree-(n-2) residual (the data line y2 = 0 is
    noncharacteristic, so that square system is invertible); the remaining
    two monomials per degree are the Cauchy data of the construction and
    are normalized to zero.  When the curvature does not vanish at the
    origin the degree-0 residual additionally forces a (y2)^2 correction of
    the quadratic part; for the mixed-sign metrics this construction is
    aimed at, that correction is zero and the quadratic part stays exactly
    (y1)^2 / 2.
    """
    if cap < 4:
        raise ValueError("seed degree cap must be at least 4")
    if gjet.cap < cap:
        raise ValueError("metric jets must reach the seed degree cap")
    gj = gjet
    if gjet.cap > cap:
        trimmed = []
        for j in (gjet.g11, gjet.g12, gjet.g22):
            t = PolyJet(cap)
            t.coef = j.coef[: cap + 1, : cap + 1].copy()
            t._truncate()
            trimmed.append(t)
        gj = MetricJet(trimmed[0], trimmed[1], trimmed[2], cap)
    geo = _geometry_jets(gj)
    r1212 = geo[2]
    z = PolyJet(cap)
    z.coef[2, 0] = 0.5
    # degree-0 residual: Hess11(0) * Hess22(0) = K|g|(0), Hess11(0) = 1
    z.coef[0, 2] = 0.5 * r1212.coef[0, 0]

    def hom_vector(jet, degree):
        return np.array([jet.coef[degree - b, b] for b in range(degree + 1)])

    for n in range(3, cap + 1):
        base = phi_jet(z, gj, geo)
        rhs = -hom_vector(base, n - 2)
        slots = [(n - b, b) for b in range(2, n + 1)]  # unknowns with b >= 2
        cols = []
        for a, b in slots:
            probe = z.copy()
            probe.coef[a, b] += 1.0
            cols.append(hom_vector(phi_jet(probe, gj, geo), n - 2) - (-rhs))
        mat = np.column_stack(cols)
        try:
            sol, res, rank, svals = np.linalg.lstsq(mat, rhs, rcond=None)
        except np.linalg.LinAlgError:
            raise SingularJetSystemError(n, float("nan"))
        if rank < len(slots) or svals[-1] < 1e-10 * max(svals[0], 1.0):
            raise SingularJetSystemError(n, float(svals[-1]))
        resid_norm = float(np.linalg.norm(mat @ sol - rhs))
        if resid_norm > 1e-8 * (1.0 + float(np.linalg.norm(rhs))):
            raise SingularJetSystemError(n, resid_norm)
        for (a, b), value in zip(slots, sol):
            z.coef[a, b] += value
    resid = phi_jet(z, gj, geo)
    worst = 0.0
    for d in range(cap - 1):
        worst = max(worst, *(abs(v) for v in resid.homogeneous_part(d).values()))
    if worst > 1e-9:
        raise SingularJetSystemError(cap, worst)
    return z


def eval_jet(jet: PolyJet, where, d1=0, d2=0):
    """Evaluate a jet (or a derivative of it) at points or on a grid."""
    from .grid import Grid

    if isinstance(where, Grid):
        X1, X2 = where.mesh()
        return ScalarField(where, jet.eval(X1, X2, d1, d2))
    y1, y2 = where
    return jet.eval(y1, y2, d1, d2)


def phi_pointwise(metric: AnalyticMetric, z: PolyJet, u, v):
    """Exact-function residual of a polynomial z at arbitrary points.

    No finite differences anywhere: metric data comes from symbolic
    derivatives and z derivatives from the jet, so tiny residual magnitudes
    near the origin are resolved down to roundoff on the term scale.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g11, g12, g22 = metric.comps(u, v)
    det = g11 * g22 - g12**2
    K = metric.curvature(u, v)
    gam = metric.gamma(u, v)
    z1 = z.eval(u, v, 1, 0)
    z2 = z.eval(u, v, 0, 1)
    H11 = z.eval(u, v, 2, 0) - gam[0, 0, 0] * z1 - gam[1, 0, 0] * z2
    H12 = z.eval(u, v, 1, 1) - gam[0, 0, 1] * z1 - gam[1, 0, 1] * z2
    H22 = z.eval(u, v, 0, 2) - gam[0, 1, 1] * z1 - gam[1, 1, 1] * z2
    inv11 = g22 / det
    inv12 = -g12 / det
    inv22 = g11 / det
    grad2 = inv11 * z1**2 + 2 * inv12 * z1 * z2 + inv22 * z2**2
    return (H11 * H22 - H12**2) - K * det * (1.0 - grad2)


def residual_decay_order(metric: AnalyticMetric, z0: PolyJet, r_min, r_max,
                         n_radii=12, n_angles=64):
    """Log-log slope of sup over circles of the residual magnitude.

    Returns math.inf when the residual is at roundoff everywhere (flat
    metrics solve exactly).
    """
    radii = np.geomspace(r_min, r_max, n_radii)
    theta = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    sups = []
    for r in radii:
        u = r * np.cos(theta)
        v = r * np.sin(theta)
        sups.append(np.max(np.abs(phi_pointwise(metric, z0, u, v))))
    sups = np.asarray(sups)
    if np.max(sups) < 1e-14:
        return math.inf, radii, sups
    slope = np.polyfit(np.log(radii), np.log(np.maximum(sups, 1e-300)), 1)[0]
    return float(slope), radii, sups
