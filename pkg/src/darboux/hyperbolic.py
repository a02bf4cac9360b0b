"""Marching solver for the regularized degenerate Cauchy problem.

The domain is the region above a Lipschitz bottom curve, capped at a top
height.  The principal coefficient is shifted by the regularization amount
so the problem is strictly hyperbolic, data are carried into the domain by a
jet extension along the bottom, and the remainder is marched upward with a
three-layer scheme (the staircase approximation of the bottom seeds the
march with zeros, which the high-order vanishing of the homogenized data
justifies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLViolationError, InstabilityError, LeviViolationError
from .grid import Grid, bilinear_sample, d1, d1_hi, d2, dn, dn_hi
from .smoothing import smoothstep

__all__ = [
    "HyperbolicProblem",
    "regularize",
    "check_levi",
    "extend_cauchy_data",
    "solve_hyperbolic",
    "apply_operator",
    "check_energy",
]


@dataclass
class HyperbolicProblem:
    """Coefficients, domain, and data of one Cauchy march.

    Axis 0 is the lateral coordinate, axis 1 the marching coordinate.  K
    already contains the regularization shift (strictly negative on the
    active region); bottom holds the boundary height per lateral node.
    """

    grid: Grid
    bottom: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    theta: float = 0.0
    alpha0: int = 4
    dissipation: bool = True

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("regularization must be nonnegative")
        act = self.active_mask()
        if np.any(self.K[act] >= 0):
            raise ValueError("principal coefficient must be negative on the domain")

    def active_mask(self):
        X, Y = self.grid.mesh()
        return Y > self.bottom[:, None] + 1e-12

    def wave_speed(self):
        return float(np.sqrt(np.max(-self.K[self.active_mask()])))


def regularize(K_raw, phi_w, grid: Grid, mask=None, clamp_collar=True):
    """Shift the principal coefficient by the residual size.

    theta is the discrete C1 magnitude of the current residual; positive
    stray values of the raw coefficient inside the boundary collar (the
    staircase sticks slightly outside the true sign region) are clamped to
    zero before shifting so the shifted coefficient is uniformly negative.
    """
    h1, h2 = grid.h
    gx = d1(phi_w, h1, 0)
    gy = d1(phi_w, h2, 1)
    mag = np.abs(phi_w) + np.hypot(gx, gy)
    theta = float(np.max(mag if mask is None else mag[mask]))
    K = np.minimum(K_raw, 0.0) if clamp_collar else K_raw
    return K - theta, theta


def check_levi(C, K_theta, mask=None):
    """Largest ratio of the positive part of C to |K_theta|."""
    Cv = C if mask is None else C[mask]
    Kv = K_theta if mask is None else K_theta[mask]
    pos = Cv > 0
    if not np.any(pos):
        return 0.0
    denom = np.abs(Kv[pos])
    if np.any(denom < 1e-300):
        raise LeviViolationError(
            "first-order coefficient positive where the principal coefficient "
            "vanishes; the regularization must be strictly positive"
        )
    return float(np.max(Cv[pos] / denom))


# --------------------------------------------------------------------------
# data extension
# --------------------------------------------------------------------------
def _curve_samples(values, grid: Grid, bottom, order):
    """Vertical-derivative jets of a grid field along the bottom curve."""
    x1, _ = grid.axes()
    h2 = grid.h[1]
    out = []
    for t in range(order + 1):
        deriv = dn_hi(values, h2, 1, t) if t else values
        out.append(bilinear_sample(deriv, grid, x1, bottom))
    return out


def extend_cauchy_data(phi, psi, f, problem: HyperbolicProblem, order=3,
                       collar=None, denom_floor=0.2):
    """Field carrying the Cauchy data with the equation matched in depth.

    Builds the vertical jet of the solution on the bottom curve: levels 0
    and 1 are the data, level t+2 solves the t-th vertical derivative of the
    equation restricted to the curve.  The curve must be noncharacteristic,
    i.e. 1 - h'(x)^2 |K| must stay away from zero there.  Returns the
    blended extension field and the jet rows.
    """
    grid = problem.grid
    x1, x2 = grid.axes()
    h1, h2 = grid.h
    h = problem.bottom
    hp = d1_hi(h, h1, 0)
    kj = _curve_samples(problem.K, grid, h, order + 1)
    cj = _curve_samples(problem.C, grid, h, order)
    dj = _curve_samples(problem.D, grid, h, order)
    fj = _curve_samples(f, grid, h, order) if f is not None else None
    nx = len(x1)
    zeros = np.zeros(nx)
    J = [np.asarray(phi, dtype=float).copy() if phi is not None else zeros.copy(),
         np.asarray(psi, dtype=float).copy() if psi is not None else zeros.copy()]
    denom = 1.0 + hp**2 * kj[0]
    if np.min(np.abs(denom)) < denom_floor:
        raise LeviViolationError(
            "bottom curve is nearly characteristic for the jet extension "
            f"(min |1 - h'^2 |K|| = {np.min(np.abs(denom)):.3f}); increase the "
            "regularization or reduce the extension order"
        )

    def ddx(row):
        return d1_hi(row, h1, 0)

    def binom(n, k):
        return math.comb(n, k)

    for t in range(order - 1):
        # eta_x vertical jets E_s for s <= t + 1 (the unknown J[t+2] term of
        # E_{t+1} is moved to the left side through the denominator)
        E = [ddx(J[s]) - hp * (J[s + 1] if s + 1 < len(J) else zeros) for s in range(t + 2)]
        KE = [sum(binom(s, j) * kj[j] * E[s - j] for j in range(s + 1)) for s in range(t + 2)]
        div_t = ddx(KE[t]) - hp * KE[t + 1]
        CE = sum(binom(t, j) * cj[j] * E[t - j] for j in range(t + 1))
        DY = sum(binom(t, j) * dj[j] * J[t + 1 - j] for j in range(t + 1))
        rhs = (fj[t] if fj is not None else zeros) - div_t - CE - DY
        J.append(rhs / denom)
    # blended polynomial in the distance to the curve, cut off in depth
    X, Y = grid.mesh()
    dist = Y - h[:, None]
    width = collar if collar is not None else 0.35 * (x2[-1] - x2[0])
    cut = smoothstep(2.0 - 2.0 * np.abs(dist) / width)
    eta = np.zeros(grid.shape)
    for t, row in enumerate(J):
        eta += row[:, None] * dist**t / math.factorial(t)
    eta *= cut
    return eta, J


# --------------------------------------------------------------------------
# the march
# --------------------------------------------------------------------------
def apply_operator(problem: HyperbolicProblem, u):
    """Discrete regularized operator on the full grid (marching stencils)."""
    h1, h2 = problem.grid.h
    K = problem.K
    Kp = 0.5 * (K + np.roll(K, -1, axis=0))
    Km = 0.5 * (K + np.roll(K, 1, axis=0))
    div = np.empty_like(u)
    div[1:-1, :] = (
        Kp[1:-1, :] * (u[2:, :] - u[1:-1, :]) - Km[1:-1, :] * (u[1:-1, :] - u[:-2, :])
    ) / h1**2
    div[0, :] = div[1, :]
    div[-1, :] = div[-2, :]
    return div + d2(u, h2, 1) + problem.C * d1(u, h1, 0) + problem.D * d1(u, h2, 1)


def solve_hyperbolic(problem: HyperbolicProblem, f, phi=None, psi=None,
                     extension_order=3, log=None, growth_guard=10.0,
                     force_extension=False):
    """March the Cauchy problem upward; returns the full-grid solution.

    Data (and, with force_extension, the right side's trace) are absorbed by
    the jet extension; the marched remainder has data vanishing to the
    extension order on the bottom, which keeps the staircase seeding clean.
    """
    grid = problem.grid
    h1, h2 = grid.h
    speed = problem.wave_speed()
    if speed * h2 > h1 * (1.0 + 1e-12):
        raise CFLViolationError(
            f"marching step {h2:.3e} exceeds {h1:.3e} / wave speed {speed:.3e}"
        )
    eta = None
    rhs = np.asarray(f, dtype=float)
    if (force_extension or (phi is not None and np.any(phi))
            or (psi is not None and np.any(psi))):
        eta, _ = extend_cauchy_data(phi, psi, f, problem, order=extension_order)
        rhs = rhs - apply_operator(problem, eta)
    n1, n2 = grid.shape
    X, Y = grid.mesh()
    act = Y > problem.bottom[:, None] + 1e-12
    u = np.zeros(grid.shape)
    K = problem.K
    Kp = 0.5 * (K + np.roll(K, -1, axis=0))
    Km = 0.5 * (K + np.roll(K, 1, axis=0))
    nu = 0.25 * h2 * float(np.max(np.abs(problem.C))) if problem.dissipation else 0.0
    # the growth guard only watches layers that have reached the problem
    # scale; the startup ramp from the zero seed rows grows fast but tiny
    height = grid.bounds[3] - grid.bounds[2]
    problem_scale = max(
        float(np.max(np.abs(rhs))) * height**2,
        float(np.max(np.abs(eta))) if eta is not None else 0.0,
        1e-300,
    )
    prev_norm = None
    for k in range(2, n2):
        um1 = u[:, k - 1]
        um2 = u[:, k - 2]
        lateral = np.zeros(n1)
        lateral[1:-1] = (
            Kp[1:-1, k - 1] * (um1[2:] - um1[1:-1])
            - Km[1:-1, k - 1] * (um1[1:-1] - um1[:-2])
        ) / h1**2
        ux = np.zeros(n1)
        ux[1:-1] = (um1[2:] - um1[:-2]) / (2 * h1)
        diss = np.zeros(n1)
        if nu:
            diss[1:-1] = nu * (um1[2:] - 2 * um1[1:-1] + um1[:-2]) / h1
        g = rhs[:, k - 1] - lateral - problem.C[:, k - 1] * ux + diss
        dcoef = problem.D[:, k - 1] * h2 / 2.0
        new = (h2**2 * g + 2 * um1 - (1.0 - dcoef) * um2) / (1.0 + dcoef)
        new[~act[:, k]] = 0.0
        new[0] = new[-1] = 0.0
        u[:, k] = new
        norm = float(np.linalg.norm(new)) * math.sqrt(h1)
        if log is not None:
            ratio = norm / prev_norm if prev_norm and prev_norm > 0 else 1.0
            log.append((k, float(np.max(np.abs(new))), ratio))
        if (prev_norm is not None
                and prev_norm > 1e-4 * problem_scale
                and norm > growth_guard * prev_norm):
            raise InstabilityError(k, norm / prev_norm)
        prev_norm = norm if norm > 0 else prev_norm
    u[~act] = 0.0
    if eta is not None:
        # the extension carries the inhomogeneous data (including the data
        # row itself on the staircase boundary)
        u = u + eta
    return u


def solve_reflected(grid: Grid, bottom_of_lateral, K, C, D, theta, f,
                    phi=None, psi=None, alpha0=4, dissipation=True, **kw):
    """March along axis 0 instead of axis 1: the reflected regions.

    Inputs are indexed [i, j] like everywhere else, with the domain
    {x1 > h(x2)}; everything is transposed into the standard orientation,
    solved, and transposed back, so the reflected solver reproduces the
    reflection of the standard solution exactly.
    """
    g = grid
    tgrid = Grid((g.bounds[2], g.bounds[3], g.bounds[0], g.bounds[1]),
                 (g.shape[1], g.shape[0]), require_origin=g.require_origin)
    tp = HyperbolicProblem(
        grid=tgrid, bottom=np.asarray(bottom_of_lateral, dtype=float),
        K=np.asarray(K).T, C=np.asarray(C).T, D=np.asarray(D).T,
        theta=theta, alpha0=alpha0, dissipation=dissipation,
    )
    out = solve_hyperbolic(tp, np.asarray(f).T, phi=phi, psi=psi, **kw)
    return out.T


def check_energy(u, problem: HyperbolicProblem, lam=64.0):
    """Sign probe of the marching energy pairing.

    Pairs the operator against the negative weighted vertical derivative
    (weight 1 / K_theta times a decaying exponential) and divides by the
    graded first-order norm; positivity is the discrete energy structure.
    """
    if np.max(np.abs(u)) == 0.0:
        raise ValueError("the zero field has no energy ratio")
    grid = problem.grid
    h1, h2 = grid.h
    X, Y = grid.mesh()
    b = np.exp(-lam * (Y - Y.min())) / problem.K
    lu = apply_operator(problem, u)
    uy = d1(u, h2, 1)
    act = problem.active_mask()
    numer = float(np.sum((lu * (-b) * uy)[act]) * h1 * h2)
    ux = d1(u, h1, 0)
    dens = u**2 + uy**2 + (ux**2) / lam
    denom = float(np.sum(dens[act]) * h1 * h2)
    return numer / max(denom, 1e-300)
