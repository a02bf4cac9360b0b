"""Direct solver for the degenerate elliptic boundary-value problem.

The problem lives on the polar rectangle (0, R) x (0, delta): second-order
stencils, zero Dirichlet data on both angular edges, the innermost rings
pinned to zero (the discrete version of prescribed radial vanishing), and
the outer edge closed by the equation itself, which degenerates there to
the angular second-order term because every other coefficient is cut off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverBreakdownError
from .grid import Grid, d1, d2, d11, trapezoid2d
from .smoothing import WeightedNormSpec, sobolev_norm, weighted_norm
from .regions import cutoff_profile

__all__ = [
    "EllipticProblem",
    "assemble",
    "apply_operator",
    "solve_elliptic",
    "check_basic_estimate",
    "check_moser_estimate",
]


@dataclass
class EllipticProblem:
    """Coefficients and parameters of the cut-off polar operator."""

    grid: Grid  # axis 0 = r in [0, R], axis 1 = theta in [0, delta]
    K: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    gamma: float = 5.0
    lam: float = 64.0
    s0: int = 4
    sigma: float = 1.0  # cutoff radius; coefficients except B vanish beyond

    def __post_init__(self):
        if np.any(self.B[1:, :] <= 0):
            raise ValueError("angular coefficient must be positive")
        edge = max(
            np.max(np.abs(self.K[-1])), np.max(np.abs(self.A[-1])),
            np.max(np.abs(self.C[-1])), np.max(np.abs(self.D[-1])),
        )
        scale = max(np.max(np.abs(self.B)), 1.0)
        if edge > 1e-9 * scale:
            raise ValueError(
                "coefficients other than the angular one must vanish at the "
                f"outer radius (cutoff); found {edge:.3e}"
            )

    @property
    def delta(self):
        return self.grid.bounds[3]

    def unknown_index(self):
        n_r, n_t = self.grid.shape
        i0 = self.s0 + 1
        rows = n_r - i0
        cols = n_t - 2
        idx = -np.ones(self.grid.shape, dtype=int)
        ii, jj = np.meshgrid(np.arange(i0, n_r), np.arange(1, n_t - 1), indexing="ij")
        idx[ii, jj] = np.arange(rows * cols).reshape(rows, cols)
        return idx


def assemble(problem: EllipticProblem):
    """Sparse matrix of the constrained problem (CSR) plus the index map."""
    grid = problem.grid
    n_r, n_t = grid.shape
    h_r, h_t = grid.h
    idx = problem.unknown_index()
    n_unknown = int(idx.max()) + 1
    rows, cols, vals = [], [], []

    def add(ri, rj, ci, cj, value):
        r = idx[ri, rj]
        keep = (r >= 0) & (ci >= 0) & (ci < n_r) & (cj >= 0) & (cj < n_t)
        c = np.where(keep, idx[np.clip(ci, 0, n_r - 1), np.clip(cj, 0, n_t - 1)], -1)
        keep &= c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(value[keep] if np.ndim(value) else np.full(keep.sum(), value))

    I, J = np.meshgrid(np.arange(n_r), np.arange(n_t), indexing="ij")
    own = idx >= 0
    I, J = I[own], J[own]
    K = problem.K[own]
    A = problem.A[own]
    B = problem.B[own]
    C = problem.C[own]
    D = problem.D[own]
    interior_r = I < n_r - 1  # radial stencils only where the neighbor exists
    Kc = np.where(interior_r, K, 0.0)
    Ac = np.where(interior_r, A, 0.0)
    Cc = np.where(interior_r, C, 0.0)
    Dc = D
    # r second difference
    add(I, J, I + 1, J, Kc / h_r**2)
    add(I, J, I - 1, J, Kc / h_r**2)
    add(I, J, I, J, -2 * Kc / h_r**2)
    # mixed term, centered 4 point
    m = Ac / (4 * h_r * h_t)
    add(I, J, I + 1, J + 1, m)
    add(I, J, I - 1, J - 1, m)
    add(I, J, I + 1, J - 1, -m)
    add(I, J, I - 1, J + 1, -m)
    # theta second difference
    add(I, J, I, J + 1, B / h_t**2)
    add(I, J, I, J - 1, B / h_t**2)
    add(I, J, I, J, -2 * B / h_t**2)
    # first-order terms, centered
    add(I, J, I + 1, J, Cc / (2 * h_r))
    add(I, J, I - 1, J, -Cc / (2 * h_r))
    add(I, J, I, J + 1, Dc / (2 * h_t))
    add(I, J, I, J - 1, -Dc / (2 * h_t))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsr()
    mat.eliminate_zeros()
    return mat, idx


def apply_operator(problem: EllipticProblem, u):
    """Pointwise application of the cut-off operator on the full grid."""
    h_r, h_t = problem.grid.h
    u_rr = d2(u, h_r, 0)
    u_rt = d11(u, h_r, h_t)
    u_tt = d2(u, h_t, 1)
    u_r = d1(u, h_r, 0)
    u_t = d1(u, h_t, 1)
    return (problem.K * u_rr + problem.A * u_rt + problem.B * u_tt
            + problem.C * u_r + problem.D * u_t)


def export_system(problem: EllipticProblem, path):
    """Coordinate-format text dump of the assembled system."""
    mat, _ = assemble(problem)
    coo = mat.tocoo()
    with open(path, "w") as f:
        f.write(f"# {coo.shape[0]} x {coo.shape[1]}, {coo.nnz} entries\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{r} {c} {float(v)!r}\n")


def solve_elliptic(problem: EllipticProblem, f, check_vanishing=True,
                   factor_cache=None):
    """Solve the constrained problem; returns the full-grid solution.

    The right side must vanish fast enough at r = 0 for the weighted norm to
    be finite (checked unless disabled); the constrained rings and both
    angular edges are exactly zero in the returned field.
    """
    if check_vanishing:
        spec = WeightedNormSpec(0, 0, gamma=problem.gamma, lam=problem.lam,
                                kind="polar")
        weighted_norm(f, spec, problem.grid)  # raises if the inner ring dominates
    if factor_cache is not None and "lu" in factor_cache:
        lu, idx = factor_cache["lu"], factor_cache["idx"]
    else:
        mat, idx = assemble(problem)
        try:
            lu = spla.splu(mat.tocsc())
        except RuntimeError as exc:
            raise SolverBreakdownError(float("nan")) from exc
        if factor_cache is not None:
            factor_cache["lu"] = lu
            factor_cache["idx"] = idx
    rhs = f[idx >= 0]
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverBreakdownError(float("inf"))
    u = np.zeros(problem.grid.shape)
    u[idx >= 0] = sol
    return u


def residual_norm(problem: EllipticProblem, u, f):
    mat, idx = assemble(problem)
    r = mat @ u[idx >= 0] - f[idx >= 0]
    denom = max(float(np.linalg.norm(f[idx >= 0])), 1e-300)
    return float(np.linalg.norm(r)) / denom


def check_basic_estimate(u, problem: EllipticProblem):
    """Sign probe of the weighted coercivity pairing.

    Integrates the weight (lam theta^2 - 1) r^-(gamma-2) against u L u and
    divides by the graded control quantity; a positive value is the discrete
    trace of the coercivity inequality.
    """
    if np.max(np.abs(u)) == 0.0:
        raise ValueError("the zero field has no estimate ratio")
    grid = problem.grid
    R, TH = grid.mesh()
    h_r, h_t = grid.h
    lam, gamma = problem.lam, problem.gamma
    rsafe = np.where(R > 0, R, 1.0)
    a = (lam * TH**2 - 1.0) / rsafe ** (gamma - 2.0)
    a[R == 0] = 0.0
    lu = apply_operator(problem, u)
    numer = trapezoid2d(a * u * lu, grid)
    phi = cutoff_profile(R, problem.sigma)
    u_r = d1(u, h_r, 0)
    u_t = d1(u, h_t, 1)
    flux = phi * np.sin(TH) * u_r + np.cos(TH) * u_t / rsafe
    dens = lam * u**2 / rsafe**gamma + flux**2 / rsafe ** (gamma - 2.0)
    dens[R == 0] = 0.0
    denom = trapezoid2d(dens, grid)
    return numer / max(denom, 1e-300)


def check_moser_estimate(u, f, w, problem: EllipticProblem, m=1):
    """Measured constant of the tame solution estimate.

    ||u||_(m, gamma) over ||f||_{m+2+gamma} + ||w||_{m+6} ||f||_{5+gamma},
    with quadrature norms; purely a logged diagnostic.
    """
    if np.max(np.abs(f)) == 0.0:
        return 0.0
    grid = problem.grid
    gamma = int(round(problem.gamma))
    spec = WeightedNormSpec(m, m, gamma=problem.gamma, lam=problem.lam, kind="polar")
    nu = weighted_norm(u, spec, grid)
    nf_hi = sobolev_norm(f, grid, m + 2 + gamma)
    nf_lo = sobolev_norm(f, grid, 5 + gamma)
    nw = sobolev_norm(w, grid, m + 6) if w is not None else 0.0
    return nu / max(nf_hi + nw * nf_lo, 1e-300)
