import math

import numpy as np
import pytest

from darboux.elliptic import (EllipticProblem, apply_operator, assemble,
                              check_basic_estimate, check_moser_estimate,
                              residual_norm, solve_elliptic)
from darboux.errors import InsufficientVanishingError
from darboux.grid import Grid
from darboux.regions import cutoff_profile, polar_coeffs

DELTA = math.pi / 16


def radial_profile(Rm, rho):
    """r^4 (1 - (r/rho)^2)^6 inside rho, with first and second derivatives."""
    w = np.maximum(1.0 - (Rm / rho) ** 2, 0.0)
    gr = Rm**4 * w**6
    gr_r = 4 * Rm**3 * w**6 - 12 * Rm**5 * w**5 / rho**2
    gr_rr = (12 * Rm**2 * w**6 - 108 * Rm**4 * w**5 / rho**2
             + 120 * Rm**6 * w**4 / rho**4)
    inside = Rm < rho
    return (np.where(inside, gr, 0.0), np.where(inside, gr_r, 0.0),
            np.where(inside, gr_rr, 0.0))


def polar_laplacian(n_r=129, n_t=65, R=1.0, rho=0.4):
    """Cut-off polar Laplacian with a manufactured solution."""
    g = Grid((0.0, R, 0.0, DELTA), (n_r, n_t))
    Rm, TH = g.mesh()
    phi = cutoff_profile(Rm, 0.9 * R)
    rsafe = np.where(Rm > 0, Rm, 1.0)
    prob = EllipticProblem(
        grid=g, K=phi**2, A=np.zeros(g.shape), B=1.0 / rsafe**2,
        C=phi / rsafe, D=np.zeros(g.shape),
        gamma=5.0, lam=64.0, s0=4, sigma=0.9 * R,
    )
    gr, gr_r, gr_rr = radial_profile(Rm, rho)
    TT = np.sin(np.pi * TH / DELTA)
    u_star = gr * TT
    f = (gr_rr + gr_r / rsafe - (np.pi / DELTA) ** 2 * gr / rsafe**2) * TT
    return prob, u_star, f


def degenerate_model(n_r=129, n_t=65, R=1.0, rho=0.4):
    """Principal coefficient k = r, degenerating at the vertex."""
    g = Grid((0.0, R, 0.0, DELTA), (n_r, n_t))
    Rm, TH = g.mesh()
    k = Rm.copy()
    dk = np.ones(g.shape)
    zero = np.zeros(g.shape)
    raw, cut = polar_coeffs(k, dk, zero, zero, g, sigma=0.9 * R)
    prob = EllipticProblem(grid=g, K=cut[0], A=cut[1], B=cut[2], C=cut[3],
                           D=cut[4], gamma=5.0, lam=64.0, s0=4, sigma=0.9 * R)
    gr, gr_r, gr_rr = radial_profile(Rm, rho)
    TT = np.sin(np.pi * TH / DELTA)
    dTT = (np.pi / DELTA) * np.cos(np.pi * TH / DELTA)
    d2TT = -((np.pi / DELTA) ** 2) * TT
    KK, A, B, C, D = raw
    f = (KK * gr_rr * TT + A * gr_r * dTT + B * gr * d2TT
         + C * gr_r * TT + D * gr * dTT)
    f = np.where(Rm < rho, f, 0.0)
    return prob, gr * TT, f


def test_assemble_block_structure():
    # with only the angular term the matrix decouples into tridiagonal
    # theta blocks: no couplings between different radial indices
    g = Grid((0.0, 1.0, 0.0, DELTA), (33, 17))
    Rm, _ = g.mesh()
    rsafe = np.where(Rm > 0, Rm, 1.0)
    zero = np.zeros(g.shape)
    prob = EllipticProblem(grid=g, K=zero, A=zero, B=1 / rsafe**2, C=zero,
                           D=zero, s0=4, sigma=0.9)
    mat, idx = assemble(prob)
    coo = mat.tocoo()
    ridx = {}
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            if idx[i, j] >= 0:
                ridx[idx[i, j]] = i
    for r, c in zip(coo.row, coo.col):
        assert ridx[r] == ridx[c]


def test_assemble_symmetry_of_angular_block():
    # the pure angular operator with constant coefficient is symmetric
    g = Grid((0.0, 1.0, 0.0, DELTA), (33, 17))
    zero = np.zeros(g.shape)
    prob = EllipticProblem(grid=g, K=zero, A=zero, B=np.ones(g.shape),
                           C=zero, D=zero, s0=4, sigma=0.9)
    mat, _ = assemble(prob)
    assert (mat - mat.T).nnz == 0


def test_row_sums_vanish_on_constants():
    prob, _, _ = polar_laplacian(65, 33)
    mat, idx = assemble(prob)
    ones = np.zeros(prob.grid.shape)
    ones[idx >= 0] = 1.0
    out = mat @ ones[idx >= 0]
    # rows whose stencil does not touch a constrained node sum to zero for
    # the second-order part; first-order terms also kill constants
    interior = np.zeros(prob.grid.shape, bool)
    interior[prob.s0 + 3 : -2, 2:-2] = True
    sel = interior[idx >= 0]
    scale = np.abs(mat).sum(axis=1).A.ravel().max()
    assert np.max(np.abs(out[sel])) < 1e-10 * scale


def test_zero_rhs_gives_zero():
    prob, _, _ = polar_laplacian(65, 33)
    u = solve_elliptic(prob, np.zeros(prob.grid.shape), check_vanishing=False)
    assert np.max(np.abs(u)) < 1e-12


def test_manufactured_polar_laplacian_order():
    errs = []
    for n in (65, 129, 257):
        prob, u_star, f = polar_laplacian(n, (n + 1) // 2)
        u = solve_elliptic(prob, f, check_vanishing=False)
        Rm, _ = prob.grid.mesh()
        sel = Rm > 0.05
        errs.append(np.sqrt(np.mean((u - u_star)[sel] ** 2)))
    order = np.log2(errs[0] / errs[2]) / 2
    assert order >= 1.5


def test_manufactured_degenerate_order():
    errs = []
    for n in (65, 129, 257):
        prob, u_star, f = degenerate_model(n, (n + 1) // 2)
        u = solve_elliptic(prob, f, check_vanishing=False)
        Rm, _ = prob.grid.mesh()
        sel = Rm > 0.05
        errs.append(np.sqrt(np.mean((u - u_star)[sel] ** 2)))
    order = np.log2(errs[0] / errs[2]) / 2
    assert order >= 1.0


def test_solver_residual_and_linearity():
    prob, u_star, f = polar_laplacian(65, 33)
    u = solve_elliptic(prob, f, check_vanishing=False)
    assert residual_norm(prob, u, f) < 1e-10
    u2 = solve_elliptic(prob, 2.0 * f, check_vanishing=False)
    assert np.max(np.abs(u2 - 2 * u)) < 1e-9 * max(np.max(np.abs(u)), 1)


def test_boundary_conditions_exact():
    prob, _, f = polar_laplacian(65, 33)
    u = solve_elliptic(prob, f, check_vanishing=False)
    assert np.max(np.abs(u[:, 0])) == 0.0
    assert np.max(np.abs(u[:, -1])) == 0.0
    assert np.max(np.abs(u[: prob.s0 + 1, :])) == 0.0


def test_vanishing_precheck_raises():
    prob, _, _ = polar_laplacian(65, 33)
    with pytest.raises(InsufficientVanishingError):
        solve_elliptic(prob, np.ones(prob.grid.shape), check_vanishing=True)


def test_discrete_equation_identity():
    # interior rearrangement: -u_tt = B^-1 [K u_rr + A u_rt + C u_r + D u_t - f]
    prob, _, f = polar_laplacian(65, 33)
    u = solve_elliptic(prob, f, check_vanishing=False)
    lu = apply_operator(prob, u)
    Rm, _ = prob.grid.mesh()
    inner = np.zeros(prob.grid.shape, bool)
    inner[prob.s0 + 2 : -2, 2:-2] = True
    inner &= Rm > 0.1
    resid = np.abs(lu - f)[inner]
    assert np.max(resid) < 5e-2 * max(np.max(np.abs(f)), 1e-300)


def test_maximum_principle_tolerant():
    prob, _, _ = polar_laplacian(65, 33)
    Rm, TH = prob.grid.mesh()
    f = -np.where((Rm > 0.15) & (Rm < 0.35), 1.0, 0.0) * np.sin(np.pi * TH / DELTA)
    f = np.where(f < 0, f, 0.0)  # f <= 0
    u = solve_elliptic(prob, f, check_vanishing=False)
    h = max(prob.grid.h)
    assert u.min() >= -10 * h * np.max(np.abs(f))


def test_basic_estimate_random_audit():
    prob, _, _ = polar_laplacian(129, 65)
    Rm, TH = prob.grid.mesh()
    rng = np.random.default_rng(4)
    win = np.sin(np.pi * np.clip((Rm - 0.1) / 0.7, 0, 1)) ** 2 * (Rm > 0.1) * (Rm < 0.8)
    ratios = []
    for trial in range(100):
        u = np.zeros(prob.grid.shape)
        for p in range(1, 4):
            for q in range(1, 4):
                u += rng.normal() * np.sin(q * np.pi * TH / DELTA) * \
                    np.sin(p * np.pi * np.clip(Rm / 0.9, 0, 1))
        u = u * win * Rm**4
        ratios.append(check_basic_estimate(u, prob))
    ratios = np.array(ratios)
    assert np.all(ratios > 0)
    # doubling lambda moves the minimum ratio by less than half
    prob2 = EllipticProblem(grid=prob.grid, K=prob.K, A=prob.A, B=prob.B,
                            C=prob.C, D=prob.D, gamma=prob.gamma,
                            lam=2 * prob.lam, s0=prob.s0, sigma=prob.sigma)
    rng = np.random.default_rng(4)
    ratios2 = []
    for trial in range(100):
        u = np.zeros(prob.grid.shape)
        for p in range(1, 4):
            for q in range(1, 4):
                u += rng.normal() * np.sin(q * np.pi * TH / DELTA) * \
                    np.sin(p * np.pi * np.clip(Rm / 0.9, 0, 1))
        u = u * win * Rm**4
        ratios2.append(check_basic_estimate(u, prob2))
    assert abs(min(ratios2) - min(ratios)) <= 0.5 * abs(min(ratios)) + 1e-12


def test_moser_estimate_guard_and_stability():
    prob, _, f = polar_laplacian(65, 33)
    assert check_moser_estimate(np.zeros(prob.grid.shape),
                                np.zeros(prob.grid.shape), None, prob) == 0.0
    vals = []
    for n in (65, 129):
        p, _, ff = polar_laplacian(n, (n + 1) // 2)
        u = solve_elliptic(p, ff, check_vanishing=False)
        vals.append(check_moser_estimate(u, ff, None, p, m=1))
    assert np.isfinite(vals).all()
    assert abs(vals[1] - vals[0]) <= 0.3 * abs(vals[0])


def test_export_system(tmp_path):
    from darboux.elliptic import export_system

    prob, _, _ = polar_laplacian(33, 17)
    path = tmp_path / "system.txt"
    export_system(prob, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("#")
    r, c, v = lines[1].split()
    int(r), int(c), float(v)
