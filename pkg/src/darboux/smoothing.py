"""Weighted norms, frequency-cutoff smoothers, and domain extension.

The smoother pair: S_mu multiplies the spectrum by a radial cutoff that is 1
below frequency mu and 0 above 2 mu, then kills a ball of radius 1/(2 mu)
around the origin with a flat radial cutoff, so smoothed fields vanish
identically near the corner where regions meet.  S'_mu is the same without
the origin cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .errors import InsufficientVanishingError
from .grid import Grid, d1, d2, dn, dn_hi, trapezoid2d

__all__ = [
    "WeightedNormSpec",
    "SmootherConfig",
    "weighted_norm",
    "sobolev_norm",
    "smooth",
    "smooth_plain",
    "extend",
    "measure_gn",
]


# --------------------------------------------------------------------------
# smooth profiles
# --------------------------------------------------------------------------
def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, flat at both ends."""
    t = np.asarray(t, dtype=float)
    a = np.zeros_like(t)
    pos = t > 0
    a[pos] = np.exp(-1.0 / np.maximum(t[pos], 1e-300))
    b = np.zeros_like(t)
    neg = t < 1
    b[neg] = np.exp(-1.0 / np.maximum(1.0 - t[neg], 1e-300))
    return a / (a + b)


def chi_hat(rho):
    """Radial frequency cutoff: 1 on [0, 1], 0 beyond 2, smooth shoulder."""
    return smoothstep(2.0 - np.asarray(rho, dtype=float))


def eta_profile(rho):
    """Radial origin cutoff: exactly 0 below 1/2, 1 beyond 1, flat ends."""
    return smoothstep(2.0 * np.asarray(rho, dtype=float) - 1.0)


@dataclass
class SmootherConfig:
    """Profile and verification parameters of the smoother pair."""

    jet_cap: int = 4        # moment orders checked for the physical kernel
    pad_fraction: float = 0.5
    moment_tol: float = 1e-4

    def kernel_moments(self, n=1024, width=48.0):
        """Quadrature moments of the physical kernel chi (inverse transform
        of the frequency profile): total mass and moments up to jet_cap."""
        h = 2 * width / n
        freq = np.fft.fftfreq(n, d=h)
        FX, FY = np.meshgrid(freq, freq, indexing="ij")
        ker_hat = chi_hat(np.hypot(FX, FY))
        ker = np.fft.ifft2(ker_hat).real / (h * h)
        ker = np.fft.fftshift(ker)
        x = (np.arange(n) - n // 2) * h
        X, Y = np.meshgrid(x, x, indexing="ij")
        out = {}
        for a in range(self.jet_cap + 1):
            for b in range(self.jet_cap + 1 - a):
                out[(a, b)] = float(np.sum(X**a * Y**b * ker) * h * h)
        return out

    def check_moments(self):
        moments = self.kernel_moments()
        errs = {}
        for (a, b), val in moments.items():
            target = 1.0 if (a, b) == (0, 0) else 0.0
            errs[(a, b)] = abs(val - target)
        worst = max(errs.values())
        return worst <= self.moment_tol, errs


# --------------------------------------------------------------------------
# extension operator
# --------------------------------------------------------------------------
def _quintic(t):
    """Polynomial smoothstep: C^2 flat ends with moderate derivative peaks,
    which keeps the taper's contribution to the measured Sobolev norms small
    (the exponential-flat profile has fourth derivatives three orders
    larger)."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _extrapolate_run(col, lo, hi, taper_cells=45):
    """Fill col[:lo] and col[hi+1:] from the interior run [lo, hi].

    Quadratic extrapolation blended to the flat edge value.  The taper
    decays from the boundary itself: it is still within O(h^2) of 1 over the
    stencil-width collar (second-order polynomial reproduction there), while
    suppressing the quadratic growth before it builds derivative mass.
    """
    n = len(col)
    dd_lo = np.arange(1, lo + 1, dtype=float)
    dd_hi = np.arange(1, n - hi, dtype=float)
    w_lo = _quintic((taper_cells - dd_lo) / float(taper_cells))
    w_hi = _quintic((taper_cells - dd_hi) / float(taper_cells))
    v0, v1, v2 = col[lo], col[min(lo + 1, hi)], col[min(lo + 2, hi)]
    q = (v0 * (1 + dd_lo) * (2 + dd_lo) / 2 - v1 * dd_lo * (2 + dd_lo)
         + v2 * dd_lo * (1 + dd_lo) / 2)
    col[lo - 1 :: -1] = w_lo * q + (1 - w_lo) * v0
    v0, v1, v2 = col[hi], col[max(hi - 1, lo)], col[max(hi - 2, lo)]
    q = (v0 * (1 + dd_hi) * (2 + dd_hi) / 2 - v1 * dd_hi * (2 + dd_hi)
         + v2 * dd_hi * (1 + dd_hi) / 2)
    col[hi + 1 :] = w_hi * q + (1 - w_hi) * v0


def extend_epigraph(u, grid: Grid, bottom, taper_cells=45):
    """Extension below a continuous bottom curve (domain x2 > bottom(x1)).

    Boundary values are interpolated at the exact curve height per column,
    so the extension varies smoothly along the boundary; sampling at the
    staircase rows instead would modulate it by the row-quantization jumps,
    which dominate high-order norms.  Quadratic in depth near the curve,
    tapering to the flat trace value.
    """
    out = np.array(u, dtype=float, copy=True)
    y = grid.axes()[1]
    h2 = grid.h[1]
    n1, n2 = out.shape
    bottom = np.asarray(bottom, dtype=float)
    for i in range(n1):
        b = bottom[i]
        j0 = int(np.searchsorted(y, b - 1e-9 * h2))
        if j0 <= 0:
            continue
        if j0 > n2 - 5:
            # too little interior above the curve for the interpolant; keep
            # what exists and continue the topmost value downward
            out[i, :j0] = out[i, min(j0, n2 - 1)]
            continue
        # quartic interpolant of the first interior values, evaluated at the
        # exact curve height: the trace varies smoothly along the boundary
        # (row-quantized sampling, or stencils shifting at low order, leave
        # jumps that dominate the fourth-order norms of the extension)
        yn = y[j0 : j0 + 5]
        cn = out[i, j0 : j0 + 5]

        def q_at(eta):
            total = 0.0
            for a in range(5):
                l = 1.0
                for bb in range(5):
                    if bb != a:
                        l *= (eta - yn[bb]) / (yn[a] - yn[bb])
                total += cn[a] * l
            return total

        v0, v1, v2 = q_at(b), q_at(b + h2), q_at(b + 2 * h2)
        dd = (b - y[:j0]) / h2
        q = (v0 * (1 + dd) * (2 + dd) / 2 - v1 * dd * (2 + dd)
             + v2 * dd * (1 + dd) / 2)
        w = _quintic((taper_cells - dd) / float(taper_cells))
        out[i, :j0] = w * q + (1 - w) * v0
    return out


def extend(u, grid: Grid, mask=None):
    """Extend a field from a masked domain to the full rectangle.

    Column-then-row quadratic extrapolation, tapered to a flat continuation
    away from the boundary: restriction is exact, values near the boundary
    reproduce polynomials to second order, and far values stay bounded by
    interior values.  Linear in u.
    """
    out = np.array(u, dtype=float, copy=True)
    if mask is None:
        return out
    mask = np.asarray(mask, dtype=bool)
    filled = mask.copy()
    n1, n2 = out.shape
    for i in range(n1):
        inside = np.flatnonzero(mask[i])
        if inside.size < 3:
            # too little data along this line; the second pass handles it
            continue
        lo, hi = inside[0], inside[-1]
        if inside.size != hi - lo + 1:
            # non-contiguous run: fill gaps linearly first
            run = out[i]
            missing = np.setdiff1d(np.arange(lo, hi + 1), inside)
            run[missing] = np.interp(missing, inside, run[inside])
        _extrapolate_run(out[i], lo, hi)
        filled[i] = True
    for j in range(n2):
        col_filled = filled[:, j]
        if col_filled.all() or col_filled.sum() < 3:
            continue
        inside = np.flatnonzero(col_filled)
        lo, hi = inside[0], inside[-1]
        _extrapolate_run(out[:, j], lo, hi)
        filled[:, j] = True
    if not filled.all():
        # isolated leftovers (domains thinner than 3 cells): flat fill from
        # the nearest filled node along axis 0, zero if the grid is empty
        for j in range(n2):
            col_filled = filled[:, j]
            if col_filled.all():
                continue
            inside = np.flatnonzero(col_filled)
            if inside.size == 0:
                out[:, j][~col_filled] = 0.0
                continue
            todo = np.flatnonzero(~col_filled)
            nearest = inside[np.argmin(np.abs(todo[:, None] - inside[None, :]), axis=1)]
            out[todo, j] = out[nearest, j]
    return out


# --------------------------------------------------------------------------
# smoothers
# --------------------------------------------------------------------------
def _convolve_lowpass(w, grid: Grid, mu, pad_fraction):
    n1, n2 = w.shape
    h1, h2 = grid.h
    p1 = next_fast_len(int(n1 * (1 + 2 * pad_fraction)))
    p2 = next_fast_len(int(n2 * (1 + 2 * pad_fraction)))
    lo1 = (p1 - n1) // 2
    lo2 = (p2 - n2) // 2
    hi1 = p1 - n1 - lo1
    hi2 = p2 - n2 - lo2
    padded = np.pad(w, ((lo1, hi1), (lo2, hi2)), mode="reflect")

    # roll the reflected collar down to zero so the periodic wrap is benign
    def window(p, lo, hi):
        win = np.ones(p)
        if lo:
            win[:lo] = smoothstep(np.linspace(0.0, 1.0, lo, endpoint=False))
        if hi:
            win[p - hi :] = smoothstep(np.linspace(0.0, 1.0, hi, endpoint=False))[::-1]
        return win

    padded = padded * window(p1, lo1, hi1)[:, None] * window(p2, lo2, hi2)[None, :]
    f1 = np.fft.fftfreq(p1, d=h1)
    f2 = np.fft.fftfreq(p2, d=h2)
    F1, F2 = np.meshgrid(f1, f2, indexing="ij")
    mult = chi_hat(np.hypot(F1, F2) / mu)
    sm = np.fft.ifft2(np.fft.fft2(padded) * mult).real
    return sm[lo1 : lo1 + n1, lo2 : lo2 + n2]


def smooth_plain(u, mu, grid: Grid, mask=None, config: SmootherConfig | None = None):
    """Low-pass smoothing at frequency scale mu, no origin cutoff."""
    if mu < 1:
        raise ValueError("smoothing scale mu must be at least 1")
    cfg = config or SmootherConfig()
    w = extend(u, grid, mask)
    return _convolve_lowpass(w, grid, mu, cfg.pad_fraction)


def smooth(u, mu, grid: Grid, mask=None, config: SmootherConfig | None = None):
    """Low-pass smoothing combined with the origin cutoff.

    The result vanishes identically where the distance to the origin is
    below 1/(2 mu).
    """
    sm = smooth_plain(u, mu, grid, mask, config)
    return sm * eta_profile(mu * grid.radius())


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class WeightedNormSpec:
    """Parameters of the vanishing-weighted norms.

    kind "polar": sum over s <= m, t <= l, s + t <= max(m, l) of
        lam^-s * integral r^(-gamma + 2 s) (d_r^s d_theta^t u)^2
    on an (r, theta) rectangle (axis 0 is r).

    kind "cartesian": sum over s <= m, t <= l of
        lam^-s * integral (d_x^s d_y^t u)^2.
    """

    m: int
    l: int
    gamma: float = 0.0
    lam: float = 1.0
    kind: str = "polar"

    def __post_init__(self):
        if self.m < 0 or self.l < 0:
            raise ValueError("norm orders must be nonnegative")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.kind == "polar" and self.gamma <= 0:
            raise ValueError("polar weight gamma must be positive")


def weighted_norm(u, spec: WeightedNormSpec, grid: Grid, mask=None):
    """Quadrature version of the weighted norms; see WeightedNormSpec.

    For the polar kind the r = 0 row is excluded (fields are required to
    vanish there) and the innermost retained ring must contribute less than
    10 percent of the total, otherwise the field does not vanish fast
    enough for the weight and InsufficientVanishingError is raised.
    """
    u = np.asarray(u, dtype=float)
    h1, h2 = grid.h
    if spec.kind == "cartesian":
        total = 0.0
        for s in range(spec.m + 1):
            ds = dn_hi(u, h1, 0, s) if s else u
            for t in range(spec.l + 1):
                dst = dn_hi(ds, h2, 1, t) if t else ds
                total += spec.lam ** (-s) * trapezoid2d(dst**2, grid, mask)
        return math.sqrt(total)

    r_axis = grid.axes()[0]
    if r_axis[0] < -1e-12:
        raise ValueError("polar norms expect r >= 0 on axis 0")
    start = 1 if r_axis[0] <= 1e-12 else 0
    r = r_axis[start:]
    total = 0.0
    inner_ring = 0.0
    cap = max(spec.m, spec.l)
    w1 = np.ones(grid.shape[0] - start)
    w1[-1] = 0.5
    if start == 0:
        w1[0] = 0.5
    w2 = np.ones(grid.shape[1])
    w2[0] = w2[-1] = 0.5
    for s in range(spec.m + 1):
        ds = dn_hi(u, h1, 0, s) if s else u
        for t in range(spec.l + 1):
            if s + t > cap:
                continue
            dst = dn_hi(ds, h2, 1, t) if t else ds
            w = spec.lam ** (-s) * r ** (2.0 * s - spec.gamma)
            contrib = (dst[start:, :] ** 2) * w[:, None] * w1[:, None] * w2[None, :]
            if mask is not None:
                contrib = contrib * mask[start:, :]
            total += float(np.sum(contrib) * h1 * h2)
            inner_ring += float(np.sum(contrib[0, :]) * h1 * h2)
    if total > 0 and inner_ring > 0.1 * total:
        raise InsufficientVanishingError(
            f"innermost ring carries {inner_ring / total:.1%} of the weighted norm; "
            "the field does not vanish fast enough at r = 0"
        )
    return math.sqrt(total)


def sobolev_norm(u, grid: Grid, m, mask=None, lam=1.0):
    """Isotropic discrete H^m norm, with the lambda grading on the x axis."""
    u = np.asarray(u, dtype=float)
    h1, h2 = grid.h
    total = 0.0
    for a in range(m + 1):
        da = dn_hi(u, h1, 0, a) if a else u
        for b in range(m + 1 - a):
            dab = dn_hi(da, h2, 1, b) if b else da
            total += lam ** (-a) * trapezoid2d(dab**2, grid, mask)
    return math.sqrt(total)


def sup_norm(u, mask=None):
    u = np.asarray(u, dtype=float)
    if mask is None:
        return float(np.max(np.abs(u)))
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(u[mask])))


def c1_norm(u, grid: Grid, mask=None):
    """Discrete C^1 norm: sup |u| + sup |grad u|."""
    h1, h2 = grid.h
    gx = d1(u, h1, 0)
    gy = d1(u, h2, 1)
    return sup_norm(u, mask) + sup_norm(np.hypot(gx, gy), mask)


def measure_gn(u, v, m, grid: Grid, mask=None):
    """Product-estimate slack: the largest ratio over |alpha|+|beta| = m of
    the product derivative L2 norm against the interpolation bound."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    h1, h2 = grid.h
    u_inf = sup_norm(u, mask)
    v_inf = sup_norm(v, mask)
    u_m = sobolev_norm(u, grid, m, mask)
    v_m = sobolev_norm(v, grid, m, mask)
    denom = u_inf * v_m + u_m * v_inf
    if denom == 0.0:
        return 0.0
    worst = 0.0
    for a1 in range(m + 1):
        for b1 in range(m + 1 - a1):
            da = dn_hi(dn_hi(u, h1, 0, a1), h2, 1, b1)
            rest = m - a1 - b1
            for a2 in range(rest + 1):
                b2 = rest - a2
                db = dn_hi(dn_hi(v, h1, 0, a2), h2, 1, b2)
                prod = math.sqrt(trapezoid2d((da * db) ** 2, grid, mask))
                worst = max(worst, prod / denom)
    return worst
