"""Rescaled sector frames: geometry bundles for the working coordinates.

A sector frame lives on a rectangle in the normalized coordinates x with
chart point y = eps^2 C x (C composes the chart rotation and the sector
normalization).  Metric data are exact pointwise thanks to the closed-form
chart metric; the seed enters through its jet composed with the same linear
map.  Everything the residual, the linearization, and the canonical
coefficients need is carried by metric.XFrame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import AnalyticMetric
from .grid import Grid, bilinear_sample
from .jets import PolyJet
from .metric import XFrame

__all__ = ["build_xframe", "SectorGeometry", "invert_xi_rows", "rotation_matrix"]


def rotation_matrix(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def build_xframe(metric: AnalyticMetric, z0jet: PolyJet, eps, grid: Grid,
                 lin=None) -> XFrame:
    """Frame on the given x grid with chart map y = eps^2 * lin * x.

    metric and z0jet are expressed in the same chart frame; lin defaults to
    the identity.
    """
    C = np.eye(2) if lin is None else np.asarray(lin, dtype=float)
    A = eps**2 * C
    X1, X2 = grid.mesh()
    U = A[0, 0] * X1 + A[0, 1] * X2
    V = A[1, 0] * X1 + A[1, 1] * X2
    # normalized metric components C^T g C: conjugate the O(1) chart values
    # directly; factoring the eps powers through tiny intermediates would
    # waste the cancellation digits the residual needs
    g = np.zeros((2, 2) + grid.shape)
    for (i, j), val in zip(((0, 0), (0, 1), (1, 1)), metric.comps(U, V)):
        g[i, j] = val
        g[j, i] = val
    gn = np.einsum("ia,ij...,jb->ab...", C, g, C)
    gamma_chart = metric.gamma(U, V)
    Cinv = np.linalg.inv(C)
    gamma = eps**2 * np.einsum("cl,lij...,ia,jb->cab...", Cinv, gamma_chart, C, C)
    curv = metric.curvature(U, V)
    z0x = z0jet.compose_linear(A) * eps**-4
    z0_d = {
        (a, b): z0x.eval(X1, X2, a, b)
        for (a, b) in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    }
    frame = XFrame(
        grid=grid, eps=eps,
        g11=gn[0, 0], g12=gn[0, 1], g22=gn[1, 1],
        gamma=gamma, curv=curv, z0_d=z0_d,
    )
    # the residual is a squared density: its frame value is (det C)^2 times
    # the chart value at the mapped point
    frame.phi_scale = float(np.linalg.det(C)) ** 2
    frame.lin = C
    return frame


def invert_xi_rows(xi1, grid: Grid, xi1_targets, xi2_targets):
    """Map points given in characteristic coordinates back to the x grid.

    xi2 equals x2, so each target interpolates between the inverses of the
    monotone functions x1 -> xi1 on the two bracketing grid rows.
    """
    xi1_targets = np.asarray(xi1_targets, dtype=float)
    xi2_targets = np.asarray(xi2_targets, dtype=float)
    shape = xi1_targets.shape
    xi1_t = xi1_targets.ravel()
    xi2_t = xi2_targets.ravel()
    x1_axis, x2_axis = grid.axes()
    h2 = grid.h[1]
    t = (xi2_t - x2_axis[0]) / h2
    t = np.clip(t, 0.0, len(x2_axis) - 1.000001)
    j = np.floor(t).astype(int)
    frac = t - j
    out = np.empty_like(xi1_t)
    for jj in np.unique(j):
        sel = j == jj
        lo = np.interp(xi1_t[sel], xi1[:, jj], x1_axis)
        hi = np.interp(xi1_t[sel], xi1[:, jj + 1], x1_axis)
        out[sel] = (1 - frac[sel]) * lo + frac[sel] * hi
    return out.reshape(shape), xi2_targets.copy()


@dataclass
class SectorGeometry:
    """Grids, masks, and maps tied to one sector of the decomposition.

    x_grid carries all bookkeeping fields; the solver grid is polar for
    elliptic sectors and the xi rectangle (with the staircase bottom curve)
    for hyperbolic ones.
    """

    kind: str
    index: int
    lin: np.ndarray  # C with y = eps^2 C x
    sector_map: np.ndarray  # T with x = T x_rotated-chart-over-eps^2
    x_grid: Grid
    mask: np.ndarray = field(repr=False)  # tangent cone cap in x
    monitor_mask: np.ndarray = field(repr=False)
    sigma: float = 1.0
    delta: float = math.pi / 16
    bottom: np.ndarray | None = field(default=None, repr=False)  # h(xi1) nodes
    curve_dev: float = 0.0  # C1 distance of the mapped curves from |.|

    def contains(self, x1, x2):
        return bilinear_sample(self.mask.astype(float), self.x_grid, x1, x2) > 0.99
