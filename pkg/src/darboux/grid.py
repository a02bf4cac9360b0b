"""Rectangular grids, scalar fields, and second-order finite differences.

Arrays are indexed [i, j] for the node (x1[i], x2[j]).  Interior stencils are
centered; boundaries use one-sided stencils of the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid on [x1min, x1max] x [x2min, x2max].

    The origin must land on a node (it is the distinguished point of every
    construction here); chart grids are origin centered, solver grids may put
    the origin on an edge or corner.
    """

    bounds: tuple
    shape: tuple
    require_origin: bool = True

    def __post_init__(self):
        x1min, x1max, x2min, x2max = self.bounds
        n1, n2 = self.shape
        if not (x1max > x1min and x2max > x2min):
            raise ValueError("empty grid bounds")
        if n1 < 9 or n2 < 9:
            raise ValueError("grids need at least 9 nodes per axis")
        if self.require_origin:
            for lo, hi, n in ((x1min, x1max, n1), (x2min, x2max, n2)):
                h = (hi - lo) / (n - 1)
                if not (lo - 1e-9 * h <= 0.0 <= hi + 1e-9 * h):
                    raise ValueError("origin outside grid bounds")
                k = round(-lo / h)
                if abs(lo + k * h) > 1e-9 * max(h, 1.0):
                    raise ValueError("origin is not a grid node")

    @classmethod
    def snapped(cls, bounds, shape):
        """Grid with the requested extent, bounds nudged so 0 is a node."""
        x1min, x1max, x2min, x2max = bounds
        n1, n2 = shape
        out = []
        for lo, hi, n in ((x1min, x1max, n1), (x2min, x2max, n2)):
            h = (hi - lo) / (n - 1)
            k = round(-lo / h)
            lo2 = -k * h
            out.extend([lo2, lo2 + (n - 1) * h])
        return cls(tuple(out), shape)

    @classmethod
    def centered(cls, half_widths, shape):
        a1, a2 = half_widths
        n1, n2 = shape
        if n1 % 2 == 0 or n2 % 2 == 0:
            raise ValueError("centered grids need odd node counts")
        return cls((-a1, a1, -a2, a2), (n1, n2))

    @property
    def h(self):
        x1min, x1max, x2min, x2max = self.bounds
        return (
            (x1max - x1min) / (self.shape[0] - 1),
            (x2max - x2min) / (self.shape[1] - 1),
        )

    def axes(self):
        x1min, x1max, x2min, x2max = self.bounds
        return (
            np.linspace(x1min, x1max, self.shape[0]),
            np.linspace(x2min, x2max, self.shape[1]),
        )

    def mesh(self):
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    def origin_index(self):
        x1, x2 = self.axes()
        return (int(np.argmin(np.abs(x1))), int(np.argmin(np.abs(x2))))

    def radius(self):
        X1, X2 = self.mesh()
        return np.hypot(X1, X2)


@dataclass
class ScalarField:
    """One real value per grid node."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def from_function(cls, grid, fn):
        X1, X2 = grid.mesh()
        return cls(grid, np.asarray(fn(X1, X2), dtype=float) + np.zeros(grid.shape))

    def check_same_grid(self, other):
        if self.grid is not other.grid and self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")


# --------------------------------------------------------------------------
# finite differences (second order, one-sided at boundaries)
# --------------------------------------------------------------------------
def d1(values, h, axis):
    """First derivative, O(h^2) centered.

    Boundary rows use third-order one-sided stencils so that composed
    differences (curvature needs two passes over the metric) stay O(h^2)
    up to the boundary.
    """
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(s):
        q = sl.copy()
        q[axis] = s
        return tuple(q)

    out[at(slice(1, -1))] = (v[at(slice(2, None))] - v[at(slice(None, -2))]) / (2 * h)
    out[at(0)] = (-11 * v[at(0)] + 18 * v[at(1)] - 9 * v[at(2)] + 2 * v[at(3)]) / (6 * h)
    out[at(-1)] = (11 * v[at(-1)] - 18 * v[at(-2)] + 9 * v[at(-3)] - 2 * v[at(-4)]) / (6 * h)
    return out


def d1_hi(values, h, axis):
    """First derivative at fourth order.

    Composed differences (metric -> Christoffel -> curvature) need the first
    pass to be better than the target order, otherwise the error-structure
    seam between one-sided and centered stencils costs a power of h on the
    second pass.
    """
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(s):
        q = sl.copy()
        q[axis] = s
        return tuple(q)

    out[at(slice(2, -2))] = (
        v[at(slice(None, -4))]
        - 8 * v[at(slice(1, -3))]
        + 8 * v[at(slice(3, -1))]
        - v[at(slice(4, None))]
    ) / (12 * h)
    out[at(0)] = (
        -25 * v[at(0)] + 48 * v[at(1)] - 36 * v[at(2)] + 16 * v[at(3)] - 3 * v[at(4)]
    ) / (12 * h)
    out[at(1)] = (
        -3 * v[at(0)] - 10 * v[at(1)] + 18 * v[at(2)] - 6 * v[at(3)] + v[at(4)]
    ) / (12 * h)
    out[at(-1)] = (
        25 * v[at(-1)] - 48 * v[at(-2)] + 36 * v[at(-3)] - 16 * v[at(-4)] + 3 * v[at(-5)]
    ) / (12 * h)
    out[at(-2)] = (
        3 * v[at(-1)] + 10 * v[at(-2)] - 18 * v[at(-3)] + 6 * v[at(-4)] - v[at(-5)]
    ) / (12 * h)
    return out


def d2(values, h, axis):
    """Second derivative, O(h^2)."""
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    sl = [slice(None)] * v.ndim

    def at(s):
        q = sl.copy()
        q[axis] = s
        return tuple(q)

    out[at(slice(1, -1))] = (
        v[at(slice(2, None))] - 2 * v[at(slice(1, -1))] + v[at(slice(None, -2))]
    ) / h**2
    out[at(0)] = (2 * v[at(0)] - 5 * v[at(1)] + 4 * v[at(2)] - v[at(3)]) / h**2
    out[at(-1)] = (2 * v[at(-1)] - 5 * v[at(-2)] + 4 * v[at(-3)] - v[at(-4)]) / h**2
    return out


def d11(values, h1, h2):
    """Mixed second derivative d^2/dx1 dx2, O(h^2)."""
    return d1(d1(values, h1, 0), h2, 1)


def gradient(values, grid):
    h1, h2 = grid.h
    return d1(values, h1, 0), d1(values, h2, 1)


def hessian(values, grid):
    h1, h2 = grid.h
    return d2(values, h1, 0), d11(values, h1, h2), d2(values, h2, 1)


def dn(values, h, axis, order):
    """Iterated first differences; adequate for derivative vanishing tests."""
    out = np.asarray(values, dtype=float)
    rem = order
    while rem >= 2:
        out = d2(out, h, axis)
        rem -= 2
    if rem:
        out = d1(out, h, axis)
    return out


def dn_hi(values, h, axis, order):
    """Iterated fourth-order first differences.

    Norm measurements across smoothing scales need the difference symbol to
    track the true derivative well into the resolved band; second-order
    stencils attenuate ~(pi nu h)^2 there, which skews fitted exponents.
    """
    out = np.asarray(values, dtype=float)
    for _ in range(order):
        out = d1_hi(out, h, axis)
    return out


def trapezoid2d(values, grid, mask=None):
    """Trapezoid quadrature; with a mask, plain masked node sum times cell area."""
    h1, h2 = grid.h
    v = np.asarray(values, dtype=float)
    if mask is not None:
        return float(np.sum(v * mask) * h1 * h2)
    w1 = np.ones(grid.shape[0])
    w1[0] = w1[-1] = 0.5
    w2 = np.ones(grid.shape[1])
    w2[0] = w2[-1] = 0.5
    return float(np.einsum("i,j,ij->", w1, w2, v) * h1 * h2)


def bilinear_sample(values, grid, x1, x2, clamp=True):
    """Bilinear interpolation of a grid field at arbitrary points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x1min, _, x2min, _ = grid.bounds
    h1, h2 = grid.h
    n1, n2 = grid.shape
    t1 = (x1 - x1min) / h1
    t2 = (x2 - x2min) / h2
    if clamp:
        t1 = np.clip(t1, 0.0, n1 - 1.000001)
        t2 = np.clip(t2, 0.0, n2 - 1.000001)
    i = np.floor(t1).astype(int)
    j = np.floor(t2).astype(int)
    i = np.clip(i, 0, n1 - 2)
    j = np.clip(j, 0, n2 - 2)
    f1 = t1 - i
    f2 = t2 - j
    v = np.asarray(values, dtype=float)
    return (
        v[i, j] * (1 - f1) * (1 - f2)
        + v[i + 1, j] * f1 * (1 - f2)
        + v[i, j + 1] * (1 - f1) * f2
        + v[i + 1, j + 1] * f1 * f2
    )


def dump_field(path, values, grid):
    """Flat binary dump with a small text header (dims, spacing, bounds)."""
    h1, h2 = grid.h
    header = (
        f"darboux-field v1\n"
        f"shape {grid.shape[0]} {grid.shape[1]}\n"
        f"h {h1!r} {h2!r}\n"
        f"bounds {grid.bounds[0]!r} {grid.bounds[1]!r} {grid.bounds[2]!r} {grid.bounds[3]!r}\n"
        f"data float64 row-major\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode())
        f.write(np.ascontiguousarray(values, dtype=float).tobytes())
