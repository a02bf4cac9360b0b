"""Development of the flattened metric and assembly of the embedding mesh.

Subtracting dz^2 from the metric of a solved height field leaves a flat
metric; an orthonormal coframe of it is rotated by the integrated connection
angle into closed forms, whose path integrals are the plane coordinates.
The embedding is (x, y, z) with the induced first fundamental form audited
cellwise against the input metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DarbouxError, NonFlatError
from .grid import Grid, ScalarField, d1, d1_hi
from .metric import MetricField, christoffel, gauss_curvature

__all__ = [
    "FlatMetricCheck",
    "EmbeddingMesh",
    "flat_metric",
    "develop",
    "assemble_embedding",
    "export_mesh",
]


@dataclass
class FlatMetricCheck:
    grid: Grid
    h11: np.ndarray = field(repr=False)
    h12: np.ndarray = field(repr=False)
    h22: np.ndarray = field(repr=False)
    curvature: np.ndarray = field(repr=False)
    max_gradient: float = 0.0

    def max_curvature(self):
        return float(np.max(np.abs(self.curvature)))


def flat_metric(g: MetricField, z: ScalarField) -> FlatMetricCheck:
    """Metric minus the squared height differential, with its curvature.

    Requires the metric gradient of z below 1 everywhere; violating nodes
    are listed in the error.
    """
    z.check_same_grid(ScalarField(g.grid, np.zeros(g.grid.shape)))
    h1, h2 = g.grid.h
    # fourth-order gradients: the curvature audit differentiates these
    # components twice more, so their truncation noise must sit well below it
    z1 = d1_hi(z.values, h1, 0)
    z2 = d1_hi(z.values, h2, 1)
    grad2 = g.inv11 * z1**2 + 2 * g.inv12 * z1 * z2 + g.inv22 * z2**2
    if np.any(grad2 >= 1.0):
        bad = np.argwhere(grad2 >= 1.0)
        raise DarbouxError(
            f"height gradient reaches 1 at {len(bad)} nodes, first {tuple(bad[0])}"
        )
    h11 = g.g11 - z1 * z1
    h12 = g.g12 - z1 * z2
    h22 = g.g22 - z2 * z2
    hm = MetricField(g.grid, h11, h12, h22)
    K = gauss_curvature(hm)
    return FlatMetricCheck(
        grid=g.grid, h11=h11, h12=h12, h22=h22, curvature=K.values,
        max_gradient=float(np.sqrt(np.max(grad2))),
    )


def _path_integral(f1, f2, grid: Grid):
    """Integral of the 1-form (f1 dx1 + f2 dx2) from the origin node,
    along right-then-up grid paths (then left/down for negative sides)."""
    h1, h2 = grid.h
    i0, j0 = grid.origin_index()
    n1, n2 = grid.shape
    out = np.zeros((n1, n2))
    # integrate along the row j0 in x1
    row = np.zeros(n1)
    for i in range(i0 + 1, n1):
        row[i] = row[i - 1] + 0.5 * (f1[i - 1, j0] + f1[i, j0]) * h1
    for i in range(i0 - 1, -1, -1):
        row[i] = row[i + 1] - 0.5 * (f1[i + 1, j0] + f1[i, j0]) * h1
    out[:, j0] = row
    # integrate up and down each column in x2
    up = 0.5 * (f2[:, :-1] + f2[:, 1:]) * h2
    for j in range(j0 + 1, n2):
        out[:, j] = out[:, j - 1] + up[:, j - 1]
    for j in range(j0 - 1, -1, -1):
        out[:, j] = out[:, j + 1] - up[:, j]
    return out


def _loop_integral(f1, f2, grid: Grid):
    """Circulation of the 1-form around the grid boundary rectangle."""
    h1, h2 = grid.h
    bottom = np.trapezoid(f1[:, 0], dx=h1)
    top = np.trapezoid(f1[:, -1], dx=h1)
    left = np.trapezoid(f2[0, :], dx=h2)
    right = np.trapezoid(f2[-1, :], dx=h2)
    return float(bottom + right - top - left)


def develop(check: FlatMetricCheck, flatness_tol=1e-3, defect_tol=None):
    """Plane coordinates of the flat metric.

    Pointwise Cholesky gives an orthonormal coframe; the connection angle is
    integrated from the origin and rotates the coframe into closed forms,
    integrated to (x, y).  The circulation of the connection form around the
    grid boundary measures path dependence and must stay within tolerance.
    Gauge: both coordinates vanish at the origin and the first coframe leg
    is not rotated there.
    """
    if check.max_curvature() > flatness_tol:
        raise NonFlatError(check.max_curvature(), flatness_tol)
    grid = check.grid
    h1, h2 = grid.h
    # coframe from Cholesky: h = L L^T, omega^a_i = L_ia
    L11 = np.sqrt(check.h11)
    L21 = check.h12 / L11
    L22 = np.sqrt(check.h22 - L21**2)
    w1 = (L11, L21)  # first coframe leg, components (d1, d2)
    w2 = (np.zeros_like(L11), L22)
    # connection form beta from d omega^1 = beta ^ omega^2,
    # d omega^2 = -beta ^ omega^1
    curl1 = d1(w1[1], h1, 0) - d1(w1[0], h2, 1)
    curl2 = d1(w2[1], h1, 0) - d1(w2[0], h2, 1)
    det = w2[1] * w1[0] - w2[0] * w1[1]
    b1 = (curl1 * w1[0] + curl2 * w2[0]) / det
    b2 = (curl1 * w1[1] + curl2 * w2[1]) / det
    defect = _loop_integral(b1, b2, grid)
    area = (grid.bounds[1] - grid.bounds[0]) * (grid.bounds[3] - grid.bounds[2])
    tol = defect_tol if defect_tol is not None else 10 * flatness_tol * area + 1e-10
    if abs(defect) > tol:
        raise NonFlatError(abs(defect), tol)
    alpha = _path_integral(b1, b2, grid)
    ca, sa = np.cos(alpha), np.sin(alpha)
    e1 = (ca * w1[0] - sa * w2[0], ca * w1[1] - sa * w2[1])
    e2 = (sa * w1[0] + ca * w2[0], sa * w1[1] + ca * w2[1])
    x = _path_integral(e1[0], e1[1], grid)
    y = _path_integral(e2[0], e2[1], grid)
    return x, y, {"loop_defect": defect, "max_curvature": check.max_curvature()}


def _solve_beta_system():  # pragma: no cover - documentation helper
    """The 2x2 system solved pointwise in develop.

    d omega^a are scalars (curls); writing beta = b1 dx1 + b2 dx2 and using
    (beta ^ w)(e1, e2) = b1 w_2 - b2 w_1 gives
        curl1 = b1 w1_2... (see develop)
    """


@dataclass
class EmbeddingMesh:
    grid: Grid
    positions: np.ndarray = field(repr=False)  # (n1, n2, 3)
    metric_error: np.ndarray = field(repr=False)  # per cell, relative

    def max_error(self):
        return float(np.max(self.metric_error))


def assemble_embedding(x, y, z, g: MetricField) -> EmbeddingMesh:
    """Mesh positions and the cellwise induced-metric error.

    The induced first fundamental form of each grid cell (by central
    differences of the corner positions) is compared against the metric
    averaged over the cell corners, normalized by the metric scale.
    """
    grid = g.grid
    h1, h2 = grid.h
    pos = np.stack([x, y, np.asarray(z, dtype=float)], axis=-1)
    if not np.all(np.isfinite(pos)):
        raise DarbouxError("embedding positions are not finite")
    # cell-centered tangents
    r1 = (pos[1:, :-1] + pos[1:, 1:] - pos[:-1, :-1] - pos[:-1, 1:]) / (2 * h1)
    r2 = (pos[:-1, 1:] + pos[1:, 1:] - pos[:-1, :-1] - pos[1:, :-1]) / (2 * h2)
    e11 = np.einsum("ijk,ijk->ij", r1, r1)
    e12 = np.einsum("ijk,ijk->ij", r1, r2)
    e22 = np.einsum("ijk,ijk->ij", r2, r2)

    def cell_avg(a):
        return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])

    g11c, g12c, g22c = cell_avg(g.g11), cell_avg(g.g12), cell_avg(g.g22)
    scale = np.maximum(np.abs(g11c) + np.abs(g22c), 1e-300)
    err = np.maximum.reduce([
        np.abs(e11 - g11c), np.abs(e12 - g12c), np.abs(e22 - g22c)
    ]) / scale
    return EmbeddingMesh(grid=grid, positions=pos, metric_error=err)


def export_mesh(mesh: EmbeddingMesh, path):
    """Wavefront-style text mesh: vertices row major, two triangles per cell.

    Formatting is fixed-width repr so identical inputs produce identical
    bytes.
    """
    n1, n2 = mesh.grid.shape
    lines = []
    for i in range(n1):
        for j in range(n2):
            px, py, pz = (float(v) for v in mesh.positions[i, j])
            lines.append(f"v {px!r} {py!r} {pz!r}")
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            a = i * n2 + j + 1
            b = (i + 1) * n2 + j + 1
            c = (i + 1) * n2 + j + 2
            d = i * n2 + j + 2
            lines.append(f"f {a} {b} {c}")
            lines.append(f"f {a} {c} {d}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines)
