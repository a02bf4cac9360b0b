"""Smoothed Newton iteration for the sector problems, and their patching.

Each step smooths the current iterate, rebuilds the characteristic chart and
canonical coefficients there, forms the right side from the accumulated
error ledger, solves the degenerate linear problem in the sector's solver
coordinates, and books the step error so that the telescoped residual
identity holds to roundoff.  Elliptic sectors run first; hyperbolic sectors
inherit their normal derivative across the shared curve as Cauchy data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticProblem, solve_elliptic
from .errors import InternalConsistencyError
from .frames import SectorGeometry, build_xframe, invert_xi_rows, rotation_matrix
from .grid import Grid, bilinear_sample, d1, d2, trapezoid2d
from .hyperbolic import HyperbolicProblem, check_levi, regularize, solve_hyperbolic
from .metric import apply_linearization
from .regions import (CanonicalChart, canonical_coeffs, cutoff_profile,
                      polar_coeffs, sector_normalize)
from .smoothing import c1_norm, smooth, smooth_plain, sup_norm
from .smoothing import WeightedNormSpec, weighted_norm

__all__ = ["Schedule", "init_schedule", "SectorContext", "IterationState",
           "run_region", "patch_solutions"]


# --------------------------------------------------------------------------
# schedule
# --------------------------------------------------------------------------
@dataclass
class Schedule:
    """Iteration bookkeeping parameters and the paper-scale constraint flags."""

    eps: float
    rho: float
    mu: float
    m_star: int
    N: int
    m0: int
    alpha0: int
    s0: int
    gamma: float
    delta: float
    lam: float
    max_iter: int = 10
    residual_target: float = 0.0
    monitor_m: int = 2
    smoothing_base: float = 3.0
    flags: list = field(default_factory=list)

    def mu_n(self, n):
        return self.mu**n

    def freq_n(self, n):
        """Physical cutoff frequency of step n.

        The schedule ratio is the dimensionless mu^n; the smoother family
        needs an anchoring frequency for the working domain, supplied by
        smoothing_base (cycles per sector unit).
        """
        return max(self.smoothing_base * self.mu**n, 1.0)


def init_schedule(m_star, N, m0, eps, *, delta=math.pi / 16, s0=4, lam=64.0,
                  gamma=None, max_iter=10, residual_target=0.0,
                  rho_fallback=10, monitor_m=2, smoothing_base=3.0) -> Schedule:
    """Derive the iteration schedule and record the regularity constraints.

    The derived decay exponent is min(m_star - N - 10, m_star - m0) - 1;
    at desk scale it usually comes out nonpositive, in which case a working
    fallback is used and flagged.  All constraint checks are informative:
    the run proceeds with flags recorded.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must be in (0, 1)")
    flags = []
    rho = min(m_star - N - 10, m_star - m0) - 1
    if m_star < 36 * (N + 10):
        flags.append(f"m_star {m_star} below the regularity bound {36 * (N + 10)}")
    m_cap = m_star / 12.0 - N - 24
    flags.append(f"embedding regularity cap m <= {m_cap:.2f}")
    if rho < 3 * N + 9:
        flags.append(f"rho {rho} below 3N+9 = {3 * N + 9}")
    if gamma is None:
        gamma = 2 * monitor_m + 1
    if rho < 2 * gamma + 54:
        flags.append(f"rho {rho} below elliptic bound 2*gamma+54 = {2 * gamma + 54}")
    if rho + 1 != (m_star - 14) / 3.0:
        flags.append("rho + 1 differs from (m_star - 14) / 3")
    if rho < 1:
        flags.append(f"derived rho {rho} unusable at desk scale; using {rho_fallback}")
        rho = rho_fallback
    mu = eps ** (-1.0 / (2.0 * rho))
    alpha0 = max(m_star - m0 - N - 6, 2)
    return Schedule(
        eps=eps, rho=rho, mu=mu, m_star=m_star, N=N, m0=m0, alpha0=alpha0,
        s0=s0, gamma=float(gamma), delta=delta, lam=lam, max_iter=max_iter,
        residual_target=residual_target, monitor_m=monitor_m,
        smoothing_base=smoothing_base, flags=flags,
    )


# --------------------------------------------------------------------------
# sector context
# --------------------------------------------------------------------------
class SectorContext:
    """Everything one sector needs to run its iteration.

    Carries the rescaled frame on the sector's x grid, masks for monitors
    and smoothing, and the solver-side grid (polar rectangle or the xi
    rectangle above the mapped bottom curve).
    """

    def __init__(self, kind, index, metric_rot, z0jet, schedule: Schedule,
                 sector_map, n_nodes=129, sigma=1.0, curve_points_rot=None,
                 sector_angles=None):
        self.kind = kind
        self.index = index
        self.schedule = schedule
        self.sector_angles = sector_angles  # rotated-frame angular interval
        eps = schedule.eps
        T = np.asarray(sector_map, dtype=float)
        self.T = T
        Tinv = np.linalg.inv(T)
        self.lin = Tinv  # y_rot = eps^2 Tinv x
        s = sigma
        if kind == "elliptic":
            bounds = (-0.06 * s, 1.25 * s, -0.06 * s, 1.25 * s)
        else:
            bounds = (-1.1 * s, 1.1 * s, -0.08 * s, 1.08 * s)
        self.x_grid = Grid.snapped(bounds, (n_nodes, n_nodes))
        self.frame = build_xframe(metric_rot, z0jet, eps, self.x_grid, lin=Tinv)
        X1, X2 = self.x_grid.mesh()
        R = np.hypot(X1, X2)
        if kind == "elliptic":
            # the ledger domain stops where the coefficient cutoff starts;
            # letting it reach further would feed the modified-equation zone
            # back through the smoothing tails
            self.mask = (X2 > 0) & (X2 < X1) & (R < 1.15 * s)
            # monitors sit a smoothing-kernel width inside the ledger domain
            self.monitor_mask = (X2 > 0) & (X2 < X1) & (R < 0.8 * s)
        else:
            self.bottom_x = self._mapped_bottom(curve_points_rot, X1)
            self.mask = ((X2 > self.bottom_x[:, None]) & (X2 < 1.04 * s)
                         & (np.abs(X1) < 1.05 * s))
            self.monitor_mask = (X2 > self.bottom_x[:, None] + 4 * self.x_grid.h[1]) \
                & (X2 < 0.72 * s) & (np.abs(X1) < 0.72 * s)
        self.monitor_mask &= _shrink(self.monitor_mask, 2)
        self.sigma = s
        self.delta = schedule.delta
        self._setup_solver_grid(n_nodes)
        self.phi_w0 = self.frame.phi(None)
        self.boundary_phi = None
        self.boundary_psi = None

    def _mapped_bottom(self, curve_points_rot, X1):
        """Bottom curve h(x1) of a hyperbolic sector from the traced curves."""
        x1_axis = self.x_grid.axes()[0]
        if curve_points_rot is None:
            return np.abs(x1_axis)
        eps = self.schedule.eps
        pts = np.vstack(curve_points_rot)  # rotated-chart coordinates
        px = (self.T @ (pts.T / eps**2)).T  # sector frame
        sel = np.abs(px[:, 0]) <= 1.3 * np.max(np.abs(x1_axis))
        px = px[sel]
        if len(px) < 4:
            # the traced curve is sampled at chart resolution, which is far
            # coarser than the sector scale: there the curve coincides with
            # its tangent cone to within the amplitude scale squared
            self.curve_dev = float(eps**2)
            return np.abs(x1_axis)
        order = np.argsort(px[:, 0])
        xs, hs = px[order, 0], px[order, 1]
        keep = np.concatenate([[True], np.diff(xs) > 1e-12])
        h = np.interp(x1_axis, xs[keep], hs[keep])
        dev = np.max(np.abs(h - np.abs(x1_axis)))
        self.curve_dev = float(dev)
        return h

    def _setup_solver_grid(self, n_nodes):
        s = self.sigma
        if self.kind == "elliptic":
            # the coefficient cutoff must be identically 1 over the image of
            # the ledger domain, so its radius sits beyond that image and the
            # solver rectangle extends to where the cutoff has died
            xi_img = 1.15 * s / math.tan(self.delta)
            self.xi_img = xi_img
            self.r_sigma = 2.01 * xi_img
            r_ext = 1.02 * self.r_sigma
            nr = int(1.5 * n_nodes) | 1
            self.solver_grid = Grid((0.0, r_ext, 0.0, self.delta), (nr, n_nodes))
        else:
            x2_axis = self.x_grid.axes()[1]
            n1 = int(1.25 * n_nodes) | 1
            self.solver_grid = Grid.snapped(
                (-1.07 * s, 1.07 * s, x2_axis[0], x2_axis[-1]),
                (n1, len(x2_axis)),
            )

    # -- transfers ----------------------------------------------------------
    def to_solver(self, values, chart: CanonicalChart):
        if self.kind == "elliptic":
            R, TH = self.solver_grid.mesh()
            xi1_t = R * np.cos(TH)
            xi2_t = R * np.sin(TH)
            x1p, x2p = invert_xi_rows(chart.xi1, self.x_grid, xi1_t, xi2_t)
            return bilinear_sample(values, self.x_grid, x1p, x2p)
        out = np.empty(self.solver_grid.shape)
        xi_axis = self.solver_grid.axes()[0]
        for j in range(self.solver_grid.shape[1]):
            out[:, j] = np.interp(xi_axis, chart.xi1[:, j], values[:, j])
        return out

    def from_solver(self, values, chart: CanonicalChart):
        """Map a solver-grid field back to the x grid.

        Cubic-spline evaluation: the update gets differentiated twice by the
        residual bookkeeping, so the interpolant must be smooth at the
        stencil scale (a linear interpolant would inject order-one relative
        noise into second differences).
        """
        from scipy.interpolate import RectBivariateSpline

        ax0, ax1 = self.solver_grid.axes()
        spl = RectBivariateSpline(ax0, ax1, values, kx=3, ky=3, s=0)
        if self.kind == "elliptic":
            xi2 = self.x_grid.mesh()[1]
            r = np.hypot(chart.xi1, xi2)
            th = np.clip(np.arctan2(xi2, chart.xi1), 0.0, self.delta)
            return spl.ev(np.clip(r, ax0[0], ax0[-1]), th)
        x2 = self.x_grid.mesh()[1]
        return spl.ev(np.clip(chart.xi1, ax0[0], ax0[-1]), x2)

    def contains(self, x1, x2):
        """Points strictly inside the ledger domain."""
        return bilinear_sample(self.mask.astype(float), self.x_grid, x1, x2) > 0.99

    def solver_bottom(self, chart: CanonicalChart):
        """Bottom curve resampled in the xi coordinate."""
        xi_axis = self.solver_grid.axes()[0]
        x1_axis = self.x_grid.axes()[0]
        # xi1 along the bottom: sample the xi field at (x1, h(x1))
        xi_on_curve = bilinear_sample(chart.xi1, self.x_grid, x1_axis, self.bottom_x)
        order = np.argsort(xi_on_curve)
        return np.interp(xi_axis, xi_on_curve[order], self.bottom_x[order])


def _shrink(mask, cells):
    out = mask.copy()
    for _ in range(cells):
        inner = out.copy()
        inner[1:, :] &= out[:-1, :]
        inner[:-1, :] &= out[1:, :]
        inner[:, 1:] &= out[:, :-1]
        inner[:, :-1] &= out[:, 1:]
        out = inner
    return out


# --------------------------------------------------------------------------
# iteration state and steps
# --------------------------------------------------------------------------
@dataclass
class IterationState:
    n: int
    w: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)
    e_prev: np.ndarray | None = field(default=None, repr=False)
    phi_w: np.ndarray | None = field(default=None, repr=False)
    theta: float = 0.0
    monitors: dict = field(default_factory=dict)


def _norm(values, ctx: SectorContext, m):
    spec = WeightedNormSpec(m, m, lam=ctx.schedule.lam, kind="cartesian")
    return weighted_norm(values, spec, ctx.x_grid, mask=ctx.monitor_mask)


def iterate_step(state: IterationState, ctx: SectorContext):
    """One smoothed Newton step; returns the new state.

    The ledger convention: the step error is defined through the update
    identity (residual after minus residual before minus the smoothed-
    coefficient times the right side), which makes the telescoped identity
    exact by construction; the three-part split of the error is logged from
    its analytic pieces, together with the gap to the ledger value (the
    solver discrepancy).
    """
    sched = ctx.schedule
    n = state.n
    mu_n = sched.freq_n(n)
    mu_prev = sched.freq_n(n - 1) if n > 0 else None
    grid = ctx.x_grid
    eps = sched.eps
    w = state.w
    phi_w = state.phi_w if state.phi_w is not None else ctx.frame.phi(w)

    v = smooth(w, mu_n, grid, mask=ctx.mask)
    phi_v = ctx.frame.phi(v)
    theta_n = c1_norm(phi_v, grid, mask=ctx.monitor_mask) if ctx.kind == "hyperbolic" else 0.0

    chart = canonical_coeffs(ctx.frame, v, ctx.kind, sched.delta,
                             kbar_check_mask=ctx.monitor_mask)
    a22 = chart.a22
    sp_a22 = smooth_plain(a22, mu_n, grid, mask=ctx.mask)
    if np.min(np.abs(sp_a22)) < 1e-6:
        raise InternalConsistencyError(
            "smoothed Hessian pivot fell below the division guard"
        )
    if n == 0:
        fregion = -smooth(ctx.phi_w0, mu_n, grid, mask=ctx.mask) / (eps * sp_a22)
    else:
        sE_now = smooth(state.E, mu_n, grid, mask=ctx.mask)
        sE_prev = smooth(state.E, mu_prev, grid, mask=ctx.mask)
        sE_prev_field = sE_prev - smooth(state.e_prev, mu_prev, grid, mask=ctx.mask)
        sphi_now = smooth(ctx.phi_w0, mu_n, grid, mask=ctx.mask)
        sphi_prev = smooth(ctx.phi_w0, mu_prev, grid, mask=ctx.mask)
        fregion = (sE_prev_field - sE_now + (sphi_prev - sphi_now)) / (eps * sp_a22)

    u = _solve_linear(ctx, chart, fregion, theta_n)

    w_next = w + u
    phi_next = ctx.frame.phi(w_next)
    e_n = phi_next - phi_w - eps * sp_a22 * fregion
    telescoped = (ctx.phi_w0 - smooth(ctx.phi_w0, mu_n, grid, mask=ctx.mask)
                  + state.E - smooth(state.E, mu_n, grid, mask=ctx.mask) + e_n)
    scale = max(sup_norm(phi_next, ctx.monitor_mask),
                sup_norm(ctx.phi_w0, ctx.monitor_mask), 1e-300)
    tele_resid = sup_norm(phi_next - telescoped, ctx.monitor_mask) / scale
    if tele_resid > 1e-6:
        raise InternalConsistencyError(
            f"telescoped residual identity violated: {tele_resid:.3e}"
        )

    # three-part error split (diagnostics)
    lin_w = eps * apply_linearization(ctx.frame, w, u)
    lin_v = eps * apply_linearization(ctx.frame, v, u)
    e1 = lin_w - lin_v
    e3 = phi_next - phi_w - lin_w
    h1 = grid.h[0]
    u_x1 = d1(u, h1, 0)
    u_x1x1 = d2(u, h1, 0)
    bracket = u_x1x1 - chart.log_msqrtg_x1 * u_x1
    ub1 = u_x1 / chart.xi1_x1
    ub11 = d1(ub1, h1, 0) / chart.xi1_x1
    lcan = ((lin_v / eps) - (phi_v / a22) * bracket) / a22 - theta_n * ub11
    e2 = (eps * (a22 * lcan - smooth_plain(a22 * lcan, mu_n, grid, mask=ctx.mask))
          + eps * theta_n * a22 * ub11 + eps * (phi_v / a22) * bracket)
    split_gap = sup_norm(e_n - (e1 + e2 + e3), ctx.monitor_mask)

    m = sched.monitor_m
    mon = {
        "n": n,
        "theta": theta_n,
        "u_norm_0": _norm(u, ctx, 0),
        "u_norm_2": _norm(u, ctx, 2),
        "u_norm_4": _norm(u, ctx, 4),
        "phi_sup": sup_norm(phi_next, ctx.monitor_mask),
        "phi_norm_0": _norm(phi_next, ctx, 0),
        "phi_norm_2": _norm(phi_next, ctx, 2),
        "e_split_1": _norm(e1, ctx, 0),
        "e_split_2": _norm(e2, ctx, 0),
        "e_split_3": _norm(e3, ctx, 0),
        "split_gap": split_gap,
        "tele_resid": tele_resid,
        # induction-statement quantities at the monitor order
        "I_q": _norm(u, ctx, m),
        "I_bound": eps * mu_n ** (m + sched.N + 2 - sched.rho),
        "II_q": _norm(w_next, ctx, m),
        "IV_q": _norm(w_next - smooth(w_next, sched.freq_n(n + 1), grid, mask=ctx.mask), ctx, m),
        "V_q": _norm(v, ctx, m),
        "VI_q": _norm(e_n, ctx, m),
        "VI_bound": eps**3 * mu_n ** (m - sched.rho),
        "VII_q": _norm(fregion, ctx, m),
        "VIII_q": _norm(phi_next, ctx, m),
        "VIII_bound": eps * sched.mu_n(n + 1) ** (m + sched.N + 4 - sched.rho),
        "kbar_min": float(np.min(chart.kbar[ctx.monitor_mask])),
        "a4_12_max": chart.a4_12_max,
    }
    return IterationState(
        n=n + 1, w=w_next, E=state.E + e_n, e_prev=e_n, phi_w=phi_next,
        theta=theta_n, monitors=mon,
    )


def _solve_linear(ctx: SectorContext, chart: CanonicalChart, fregion, theta_n):
    """Dispatch the canonical-form solve and map the update back."""
    sched = ctx.schedule
    if ctx.kind == "elliptic":
        k_s = np.maximum(ctx.to_solver(chart.k, chart), 0.0)
        dk_s = ctx.to_solver(chart.dk_dxi1, chart)
        c_s = ctx.to_solver(chart.c, chart)
        d_s = ctx.to_solver(chart.d, chart)
        _, (K, A, B, C, D) = polar_coeffs(k_s, dk_s, c_s, d_s,
                                          ctx.solver_grid, ctx.r_sigma)
        problem = EllipticProblem(
            grid=ctx.solver_grid, K=K, A=A, B=B, C=C, D=D,
            gamma=sched.gamma, lam=sched.lam, s0=sched.s0, sigma=ctx.r_sigma,
        )
        f_s = ctx.to_solver(fregion, chart)
        # right side tapered far beyond the ledger-domain image, where the
        # transferred values are extension junk
        f_taper = cutoff_profile(ctx.solver_grid.mesh()[0], 2.0 * ctx.xi_img)
        u_s = solve_elliptic(problem, f_s * f_taper, check_vanishing=False)
        return ctx.from_solver(u_s, chart)
    k_s = ctx.to_solver(chart.k, chart)
    c_s = ctx.to_solver(chart.c, chart)
    d_s = ctx.to_solver(chart.d, chart)
    f_s = ctx.to_solver(fregion, chart)
    K_theta = np.minimum(k_s, 0.0) - max(theta_n, 1e-14)
    bottom = ctx.solver_bottom(chart)
    check_levi(c_s, K_theta)
    problem = HyperbolicProblem(
        grid=ctx.solver_grid, bottom=bottom, K=K_theta, C=c_s, D=d_s,
        theta=theta_n, alpha0=sched.alpha0,
    )
    u_s = solve_hyperbolic(problem, f_s, force_extension=True,
                           extension_order=2)
    return ctx.from_solver(u_s, chart)


# --------------------------------------------------------------------------
# region driver
# --------------------------------------------------------------------------
@dataclass
class ConvergenceLog:
    rows: list = field(default_factory=list)
    converged: bool = False
    failure: str = ""

    def write_csv(self, path):
        if not self.rows:
            return
        keys = list(self.rows[0].keys())
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=keys)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def initial_iterate(ctx: SectorContext):
    """w0 for the sector: zero for elliptic, the data extension otherwise."""
    grid = ctx.x_grid
    if ctx.kind == "elliptic" or ctx.boundary_phi is None:
        return np.zeros(grid.shape)
    # carry (phi, psi) off the bottom curve: value plus distance times slope,
    # cut off in depth
    from .smoothing import smoothstep

    X1, X2 = grid.mesh()
    dist = X2 - ctx.bottom_x[:, None]
    width = 0.3 * (grid.bounds[3] - grid.bounds[2])
    cut = smoothstep(2.0 - 2.0 * np.abs(dist) / width)
    w0 = (ctx.boundary_phi[:, None] + dist * ctx.boundary_psi[:, None]) * cut
    w0[~ctx.mask] = 0.0
    # smallness of the inherited data (logged by the caller)
    ctx.data_size = float(np.max(np.abs(ctx.boundary_phi)) +
                          np.max(np.abs(ctx.boundary_psi)))
    return w0


def run_region(ctx: SectorContext, schedule: Schedule | None = None,
               boundary_data=None):
    """Iterate one sector to its residual target or iteration cap.

    boundary_data, for hyperbolic sectors, is a pair of arrays (value and
    normal-derivative rows along the sector's x1 axis); the smallness gate
    of the inherited data is checked and logged, not enforced.
    Returns (w, ConvergenceLog).
    """
    sched = schedule or ctx.schedule
    if boundary_data is not None:
        ctx.boundary_phi, ctx.boundary_psi = boundary_data
        size = float(np.max(np.abs(ctx.boundary_phi)) +
                     np.max(np.abs(ctx.boundary_psi)))
        gate = sched.eps**3
        if size > gate:
            ctx.data_warning = (
                f"inherited data size {size:.3e} exceeds eps^3 = {gate:.3e}"
            )
    w0 = initial_iterate(ctx)
    state = IterationState(n=0, w=w0, E=np.zeros_like(w0),
                           phi_w=ctx.frame.phi(w0))
    # the ledger residual of the zeroth iterate
    phi0_sup = sup_norm(state.phi_w, ctx.monitor_mask)
    ctx.phi_w0 = state.phi_w
    log = ConvergenceLog()
    best = (phi0_sup, state.w)
    grow = 0
    sups = [phi0_sup]
    for n in range(sched.max_iter):
        state = iterate_step(state, ctx)
        row = dict(state.monitors)
        row["phi0_sup"] = phi0_sup
        log.rows.append(row)
        s = row["phi_sup"]
        sups.append(s)
        if s < best[0]:
            best = (s, state.w)
        grow = grow + 1 if s > sups[-2] else 0
        if grow >= 3:
            log.failure = f"residual grew for 3 consecutive steps at n = {n}"
            return best[1], log
        if s <= sched.residual_target or s <= 1e-3 * max(phi0_sup, 1e-300) and n >= 2:
            log.converged = True
            return state.w, log
    log.converged = sups[-1] <= 0.1 * max(phi0_sup, 1e-300)
    return (state.w if log.converged or best[0] >= sups[-1] else best[1]), log


# --------------------------------------------------------------------------
# patching
# --------------------------------------------------------------------------
def _sector_of(decomp, angle):
    two_pi = 2 * math.pi
    for s in decomp.sectors:
        a = (angle - s.phi1) % two_pi
        width = (s.phi2 - s.phi1) % two_pi or two_pi
        if a <= width:
            return s
    return decomp.sectors[-1]


def transfer_cauchy_data(ell_ctx: SectorContext, hyp_ctx: SectorContext, w_ell):
    """Data rows for a hyperbolic sector from its bordering elliptic one.

    The value row is the elliptic trace (zero by its boundary condition);
    the slope row is the directional derivative of the patched scalar along
    the hyperbolic marching direction, evaluated on the shared curve.
    """
    eps = hyp_ctx.schedule.eps
    x1_axis = hyp_ctx.x_grid.axes()[0]
    curve = np.column_stack([x1_axis, hyp_ctx.bottom_x])
    # the same physical points in the elliptic frame
    y_rot = (eps**2 * hyp_ctx.lin @ curve.T)
    x_ell = (np.linalg.inv(ell_ctx.lin) @ y_rot / eps**2)
    inside = ell_ctx.contains(x_ell[0], x_ell[1])
    w_vals = bilinear_sample(w_ell, ell_ctx.x_grid, x_ell[0], x_ell[1])
    h1e, h2e = ell_ctx.x_grid.h
    gx = bilinear_sample(d1(w_ell, h1e, 0), ell_ctx.x_grid, x_ell[0], x_ell[1])
    gy = bilinear_sample(d1(w_ell, h2e, 1), ell_ctx.x_grid, x_ell[0], x_ell[1])
    # gradient w.r.t. the rotated chart, then the hyperbolic vertical
    Ce = np.linalg.inv(ell_ctx.lin) / eps**2  # x_ell = Ce y
    grad_y = Ce.T @ np.vstack([gx, gy])
    dir_y = eps**2 * hyp_ctx.lin @ np.array([0.0, 1.0])
    psi = grad_y[0] * dir_y[0] + grad_y[1] * dir_y[1]
    phi = w_vals
    phi[~inside] = 0.0
    psi[~inside] = 0.0
    return phi, psi


def patch_solutions(contexts, solutions, decomp, chart_radius, n_nodes=129,
                    jump_tol_value=None, jump_tol_grad=None):
    """Assemble the per-sector solutions on a chart patch around the origin.

    Elliptic pairs that share a boundary are treated as one region (their
    common curve appears in no interface report); every elliptic-hyperbolic
    interface reports the jump of the value and the first derivatives of
    the patched scalar.  Returns (w field on the rotated-chart patch grid,
    interface report list).
    """
    eps = contexts[0].schedule.eps
    grid = Grid.centered((chart_radius, chart_radius), (n_nodes, n_nodes))
    Y1, Y2 = grid.mesh()
    ang = np.arctan2(Y2, Y1) % (2 * math.pi)
    w = np.zeros(grid.shape)
    owner = np.full(grid.shape, -1, dtype=int)
    rot = decomp.rotation
    for idx, (ctx, sol) in enumerate(zip(contexts, solutions)):
        s = ctx.sector_angles  # rotated-frame angular interval
        a = (ang - s[0]) % (2 * math.pi)
        width = (s[1] - s[0]) % (2 * math.pi) or 2 * math.pi
        sel = a <= width
        pts = np.vstack([Y1[sel], Y2[sel]])
        x_s = np.linalg.inv(ctx.lin) @ pts / eps**2
        w[sel] = bilinear_sample(sol, ctx.x_grid, x_s[0], x_s[1])
        owner[sel] = idx
    report = []
    kinds = [c.kind for c in contexts]
    for i, ctx in enumerate(contexts):
        j = (i + 1) % len(contexts)
        if kinds[i] == "elliptic" and kinds[j] == "elliptic":
            continue  # combined into one region, no interface to report
        boundary_angle = ctx.sector_angles[1]
        radii = np.linspace(4 * min(grid.h), 0.9 * chart_radius, 24)
        pts = np.vstack([radii * math.cos(boundary_angle),
                         radii * math.sin(boundary_angle)])
        vals, grads = [], []
        for ctx2 in (contexts[i], contexts[j]):
            x_s = np.linalg.inv(ctx2.lin) @ pts / eps**2
            sol2 = solutions[contexts.index(ctx2)]
            vals.append(bilinear_sample(sol2, ctx2.x_grid, x_s[0], x_s[1]))
            h1s, h2s = ctx2.x_grid.h
            gx = bilinear_sample(d1(sol2, h1s, 0), ctx2.x_grid, x_s[0], x_s[1])
            gy = bilinear_sample(d1(sol2, h2s, 1), ctx2.x_grid, x_s[0], x_s[1])
            C2 = np.linalg.inv(ctx2.lin) / eps**2
            grads.append(C2.T @ np.vstack([gx, gy]))
        # interface traces are near zero by construction; jumps are judged
        # against the global solution scale on the patch
        wscale = max(float(np.max(np.abs(w))), 1e-300)
        gsc = np.hypot(*np.gradient(w, *grid.h))
        gscale = max(float(np.max(gsc)), 1e-300)
        report.append({
            "interface": f"{kinds[i]}{contexts[i].index}-{kinds[j]}{contexts[j].index}",
            "value_jump": float(np.max(np.abs(vals[0] - vals[1]))) / wscale,
            "grad_jump": float(np.max(np.abs(grads[0] - grads[1]))) / gscale,
        })
    return grid, w, report
