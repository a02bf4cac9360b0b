"""Metric fields, curvature, the Monge-Ampere residual, and its linearization.

Chart-frame operations work on sampled metric components with second-order
finite differences.  The rescaled frame (coordinates x with y = eps^2 x, and
the unknown split z = z0 + eps^5 w) is carried by XFrame, which mixes exact
seed/metric derivatives with finite differences of the grid unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetricError, GridMismatchError
from .grid import Grid, ScalarField, d1, d1_hi, d2, d11, dn

__all__ = [
    "MetricField",
    "GeometryCache",
    "christoffel",
    "gauss_curvature",
    "vanishing_order",
    "cov_hessian",
    "darboux_residual",
    "XFrame",
    "linearization_coeffs",
    "apply_linearization",
]


@dataclass
class MetricField:
    """Sampled metric components with cached determinant and inverse."""

    grid: Grid
    g11: np.ndarray = field(repr=False)
    g12: np.ndarray = field(repr=False)
    g22: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("g11", "g12", "g22"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise GridMismatchError(f"{name} shape {arr.shape} != grid {self.grid.shape}")
            setattr(self, name, arr)
        self.det = self.g11 * self.g22 - self.g12**2
        bad = (self.g11 <= 0.0) | (self.det <= 0.0)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            x1, x2 = self.grid.axes()
            raise DegenerateMetricError((int(i), int(j)), (float(x1[i]), float(x2[j])))
        self.inv11 = self.g22 / self.det
        self.inv12 = -self.g12 / self.det
        self.inv22 = self.g11 / self.det

    @classmethod
    def from_functions(cls, grid, f11, f12, f22):
        X1, X2 = grid.mesh()
        z = np.zeros(grid.shape)
        return cls(grid, f11(X1, X2) + z, f12(X1, X2) + z, f22(X1, X2) + z)

    def comp(self, i, j):
        return (self.g11, self.g12, self.g12, self.g22)[2 * i + j]

    def inv(self, i, j):
        return (self.inv11, self.inv12, self.inv12, self.inv22)[2 * i + j]


@dataclass
class GeometryCache:
    """Christoffel symbols and curvature derived from a metric field."""

    metric: MetricField
    gamma: np.ndarray = field(repr=False)  # [l, i, j] nodewise, symmetric in (i, j)
    curvature: ScalarField | None = None
    riemann_1212: np.ndarray | None = field(default=None, repr=False)
    vanishing_order: int | None = None


def christoffel(g: MetricField) -> GeometryCache:
    """Christoffel symbols by centered differences (one-sided at the boundary)."""
    h1, h2 = g.grid.h
    dg = np.empty((2, 2, 2) + g.grid.shape)  # dg[k, i, j] = d_k g_ij
    for i in range(2):
        for j in range(2):
            comp = g.comp(i, j)
            dg[0, i, j] = d1_hi(comp, h1, 0)
            dg[1, i, j] = d1_hi(comp, h2, 1)
    gamma = np.zeros((2, 2, 2) + g.grid.shape)
    for l in range(2):
        for i in range(2):
            for j in range(2):
                acc = 0.0
                for m in range(2):
                    acc = acc + g.inv(l, m) * (dg[i, j, m] + dg[j, i, m] - dg[m, i, j])
                gamma[l, i, j] = 0.5 * acc
    return GeometryCache(metric=g, gamma=gamma)


def _riemann_1212(g: MetricField, gamma):
    """Lowered curvature component R_1212 for the fixed convention

    R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj
              + Gamma^i_km Gamma^m_lj - Gamma^i_lm Gamma^m_kj.
    """
    h1, h2 = g.grid.h
    r_up = []  # R^i_212 for i = 0, 1
    for i in range(2):
        term = d1_hi(gamma[i, 1, 1], h1, 0) - d1_hi(gamma[i, 0, 1], h2, 1)
        for m in range(2):
            term = term + gamma[i, 0, m] * gamma[m, 1, 1] - gamma[i, 1, m] * gamma[m, 0, 1]
        r_up.append(term)
    return g.g11 * r_up[0] + g.g12 * r_up[1]


def gauss_curvature(g: MetricField, cache: GeometryCache | None = None) -> ScalarField:
    """Gaussian curvature K = R_1212 / det g."""
    if cache is None:
        cache = christoffel(g)
    r = _riemann_1212(g, cache.gamma)
    K = ScalarField(g.grid, r / g.det)
    cache.riemann_1212 = r
    cache.curvature = K
    return K


def vanishing_order(K: ScalarField, tol=1e-5) -> int:
    """Largest N with all derivatives of order <= N vanishing at the origin.

    Finite-difference derivatives at the origin node, nondimensionalized by
    the chart scale; returns -1 when K(0) itself exceeds the tolerance.
    """
    grid = K.grid
    i0, j0 = grid.origin_index()
    h1, h2 = grid.h
    x1min, x1max, x2min, x2max = grid.bounds
    L = min(x1max - x1min, x2max - x2min) / 2
    scale = max(float(np.max(np.abs(K.values))), 1e-300)
    max_order = min(grid.shape) // 2 - 2
    for order in range(0, max_order + 1):
        for a in range(order + 1):
            b = order - a
            deriv = dn(dn(K.values, h1, 0, a), h2, 1, b)
            val = abs(deriv[i0, j0]) * L**order
            if val > tol * scale:
                return order - 1
    return max_order


def cov_hessian(g: MetricField, z: ScalarField, cache: GeometryCache | None = None):
    """Covariant Hessian components (H11, H12, H22) of z."""
    z.check_same_grid(ScalarField(g.grid, np.zeros(g.grid.shape)))
    if cache is None:
        cache = christoffel(g)
    h1, h2 = g.grid.h
    z1 = d1(z.values, h1, 0)
    z2 = d1(z.values, h2, 1)
    H11 = d2(z.values, h1, 0) - cache.gamma[0, 0, 0] * z1 - cache.gamma[1, 0, 0] * z2
    H12 = d11(z.values, h1, h2) - cache.gamma[0, 0, 1] * z1 - cache.gamma[1, 0, 1] * z2
    H22 = d2(z.values, h2, 1) - cache.gamma[0, 1, 1] * z1 - cache.gamma[1, 1, 1] * z2
    return H11, H12, H22


def darboux_residual(g: MetricField, z: ScalarField, cache: GeometryCache | None = None) -> ScalarField:
    """det(cov Hess z) - K det(g) (1 - |grad_g z|^2), nodewise."""
    if cache is None:
        cache = christoffel(g)
    if cache.curvature is None:
        gauss_curvature(g, cache)
    H11, H12, H22 = cov_hessian(g, z, cache)
    h1, h2 = g.grid.h
    z1 = d1(z.values, h1, 0)
    z2 = d1(z.values, h2, 1)
    grad2 = g.inv11 * z1**2 + 2 * g.inv12 * z1 * z2 + g.inv22 * z2**2
    phi = (H11 * H22 - H12**2) - cache.curvature.values * g.det * (1.0 - grad2)
    return ScalarField(g.grid, phi)


# --------------------------------------------------------------------------
# rescaled frame
# --------------------------------------------------------------------------
@dataclass
class XFrame:
    """Geometry of one working chart in the rescaled coordinates y = eps^2 C x.

    Components are normalized so that every stored field is the chart-frame
    quantity evaluated at the mapped point:

      g:      pullback metric components divided by eps^4 (so O(1)),
      gamma:  Christoffel symbols of that pullback in x coordinates
              (these carry the eps^2 factor internally),
      curv:   true Gaussian curvature at the mapped point,
      z0:     exact derivative arrays of the normalized seed Z0 = z0 / eps^4.

    The unknown W relates to the seed by Z = Z0 + eps * W, matching
    z = z0 + eps^5 w after normalization.
    """

    grid: Grid
    eps: float
    g11: np.ndarray = field(repr=False)
    g12: np.ndarray = field(repr=False)
    g22: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)  # [l, i, j] nodewise
    curv: np.ndarray = field(repr=False)
    z0_d: dict = field(repr=False, default_factory=dict)  # {(a, b): array}, a+b <= 2

    def __post_init__(self):
        self.det = self.g11 * self.g22 - self.g12**2
        if np.any(self.det <= 0) or np.any(self.g11 <= 0):
            bad = np.argwhere((self.det <= 0) | (self.g11 <= 0))[0]
            raise DegenerateMetricError(tuple(int(v) for v in bad), "rescaled frame")
        self.inv11 = self.g22 / self.det
        self.inv12 = -self.g12 / self.det
        self.inv22 = self.g11 / self.det

    # -- z assembly --------------------------------------------------------
    def z_derivs(self, W=None, w_derivs=None):
        """Derivative arrays {(a,b): d^a_1 d^b_2 Z} of Z = Z0 + eps W.

        W derivatives come from finite differences unless exact arrays are
        supplied in w_derivs.
        """
        out = {k: v.copy() for k, v in self.z0_d.items()}
        if W is None:
            return out
        h1, h2 = self.grid.h
        if w_derivs is None:
            w_derivs = {
                (0, 0): W,
                (1, 0): d1(W, h1, 0),
                (0, 1): d1(W, h2, 1),
                (2, 0): d2(W, h1, 0),
                (1, 1): d11(W, h1, h2),
                (0, 2): d2(W, h2, 1),
            }
        for k in out:
            out[k] = out[k] + self.eps * w_derivs[k]
        return out

    def cov_hess(self, zd):
        z1, z2 = zd[(1, 0)], zd[(0, 1)]
        H11 = zd[(2, 0)] - self.gamma[0, 0, 0] * z1 - self.gamma[1, 0, 0] * z2
        H12 = zd[(1, 1)] - self.gamma[0, 0, 1] * z1 - self.gamma[1, 0, 1] * z2
        H22 = zd[(0, 2)] - self.gamma[0, 1, 1] * z1 - self.gamma[1, 1, 1] * z2
        return H11, H12, H22

    def grad_sq(self, zd):
        """|grad_g z|^2 in chart normalization: eps^4 g^{ij} Z_i Z_j."""
        z1, z2 = zd[(1, 0)], zd[(0, 1)]
        return self.eps**4 * (
            self.inv11 * z1**2 + 2 * self.inv12 * z1 * z2 + self.inv22 * z2**2
        )

    def curv_payload(self, zd):
        """K |g| (1 - |grad_g z|^2), the curvature side of the residual."""
        return self.curv * self.det * (1.0 - self.grad_sq(zd))

    def phi(self, W=None, w_derivs=None, zd=None):
        """Monge-Ampere residual of z = z0 + eps^5 w on this frame's grid."""
        if zd is None:
            zd = self.z_derivs(W, w_derivs)
        H11, H12, H22 = self.cov_hess(zd)
        return (H11 * H22 - H12**2) - self.curv_payload(zd)

    def cofactor(self, zd):
        """Cofactor matrix (a11, a12, a22) of the covariant Hessian."""
        H11, H12, H22 = self.cov_hess(zd)
        return H22, -H12, H11


def linearization_coeffs(frame: XFrame, W=None, w_derivs=None):
    """Second- and first-order coefficient fields of the linearized operator.

    Returns ((a11, a12, a22), (a1_1, a1_2)) so that
    eps^-1 L(w) u = a^{ij} d_ij u + a1^l d_l u.
    """
    zd = frame.z_derivs(W, w_derivs)
    a11, a12, a22 = frame.cofactor(zd)
    kg = frame.curv * frame.det
    z1, z2 = zd[(1, 0)], zd[(0, 1)]
    zup1 = frame.inv11 * z1 + frame.inv12 * z2
    zup2 = frame.inv12 * z1 + frame.inv22 * z2
    a = ((a11, a12), (a12, a22))
    a1 = []
    for l in range(2):
        acc = 0.0
        for i in range(2):
            for j in range(2):
                acc = acc + a[i][j] * frame.gamma[l, i, j]
        a1.append(-acc + 2.0 * frame.eps**4 * kg * (zup1 if l == 0 else zup2))
    return (a11, a12, a22), (a1[0], a1[1])


def apply_linearization(frame: XFrame, W, u, u_derivs=None, w_derivs=None):
    """eps^-1 L(w) u as a grid field.

    The derivative of the residual in the direction of the unknown: cofactor
    contraction of the covariant Hessian of u plus the gradient coupling
    through the curvature term.
    """
    h1, h2 = frame.grid.h
    if u_derivs is None:
        u_derivs = {
            (1, 0): d1(u, h1, 0),
            (0, 1): d1(u, h2, 1),
            (2, 0): d2(u, h1, 0),
            (1, 1): d11(u, h1, h2),
            (0, 2): d2(u, h2, 1),
        }
    (a11, a12, a22), (a1_1, a1_2) = linearization_coeffs(frame, W, w_derivs)
    U11 = u_derivs[(2, 0)]
    U12 = u_derivs[(1, 1)]
    U22 = u_derivs[(0, 2)]
    u1 = u_derivs[(1, 0)]
    u2 = u_derivs[(0, 1)]
    return a11 * U11 + 2 * a12 * U12 + a22 * U22 + a1_1 * u1 + a1_2 * u2
