import math

import numpy as np
import pytest

from darboux.catalog import graph_curvature, m1_metric, M1_HEIGHT
from darboux.errors import UnsupportedTopologyError
from darboux.expr import Expr2
from darboux.frames import build_xframe, rotation_matrix
from darboux.grid import Grid, ScalarField
from darboux.metric import gauss_curvature
from darboux.regions import (canonical_coeffs, cutoff_profile,
                             decompose_regions, detect_zero_set,
                             operator_identity_error, polar_coeffs,
                             sector_normalize, solve_xi)


def test_detect_zero_set_product_curvature():
    g = Grid.centered((0.5, 0.5), (129, 129))
    K = ScalarField.from_function(g, lambda u, v: u * v)
    curves, angle = detect_zero_set(K)
    assert angle == pytest.approx(math.pi / 2, abs=1e-6)
    tangents = sorted(tuple(np.round(np.abs(c.tangent), 4)) for c in curves)
    assert tangents == [(0.0, 1.0), (1.0, 0.0)]


def test_detect_zero_set_m1(m1):
    g = Grid.centered((0.5, 0.5), (129, 129))
    K = gauss_curvature(m1.sample(g))
    curves, angle = detect_zero_set(K)
    assert abs(angle - math.pi / 2) < 0.02
    dec = decompose_regions(K)
    kinds = [s.kind for s in dec.sectors]
    assert kinds.count("elliptic") == 2 and kinds.count("hyperbolic") == 2
    signs = [s.sign for s in dec.sectors]
    assert signs in ([1, -1, 1, -1], [-1, 1, -1, 1])


def test_detect_zero_set_no_sign_change():
    g = Grid.centered((0.5, 0.5), (65, 65))
    K = ScalarField.from_function(g, lambda u, v: u**2 + v**2)
    with pytest.raises(UnsupportedTopologyError):
        detect_zero_set(K)


def test_sector_normalize_cases():
    # already-normal elliptic cone: identity
    T = sector_normalize(0.0, math.pi / 4, "elliptic")
    assert np.allclose(T, np.eye(2), atol=1e-12)
    # upward hyperbolic cone between the diagonals: identity
    T = sector_normalize(math.pi / 4, 3 * math.pi / 4, "hyperbolic")
    assert np.allclose(T, np.eye(2), atol=1e-12)
    # first-quadrant elliptic cone needs a rotation factor
    T = sector_normalize(0.0, math.pi / 2, "elliptic")
    img0 = T @ np.array([1.0, 0.0])
    img1 = T @ np.array([0.0, 1.0])
    assert img0[1] == pytest.approx(0.0, abs=1e-12) and img0[0] > 0
    assert img1[0] == pytest.approx(img1[1], abs=1e-12) and img1[0] > 0
    # diagonal-first-row structure is preserved when no rotation is needed
    T = sector_normalize(-math.pi / 4, math.pi / 4, "elliptic")
    assert T[0, 1] == 0.0


def test_solve_xi_constant_slopes():
    g = Grid.snapped((-1.0, 1.0, -0.05, 1.0), (65, 65))
    X1, X2 = g.mesh()
    # zero slope: xi1 = x1 under the hyperbolic data line
    xi1, flags = solve_xi(np.zeros(g.shape), g, "hyperbolic", math.pi / 16)
    assert np.max(np.abs(xi1 - X1)) < 1e-10
    # constant slope c: characteristics x1 = x1_0 + c x2, so xi1 = x1 - c x2
    c = 0.3
    xi1, flags = solve_xi(np.full(g.shape, c), g, "hyperbolic", math.pi / 16)
    inner = ~flags
    assert np.max(np.abs((xi1 - (X1 - c * X2))[inner])) < 1e-6


def test_solve_xi_elliptic_diagonal_data():
    # zero slope, delta = pi/4: the scaling makes xi1 = x1 exactly
    g = Grid.snapped((-0.05, 1.2, -0.05, 1.2), (65, 65))
    X1, X2 = g.mesh()
    xi1, flags = solve_xi(np.zeros(g.shape), g, "elliptic", math.pi / 4)
    assert np.max(np.abs((xi1 - X1)[~flags])) < 1e-9


@pytest.fixture(scope="module")
def m1_elliptic_chart(m1_rotated, m1_seed4):
    sched_delta = math.pi / 16
    T = sector_normalize(-math.pi / 4, math.pi / 4, "elliptic")
    grid = Grid.snapped((-0.06, 1.25, -0.06, 1.25), (129, 129))
    frame = build_xframe(m1_rotated, m1_seed4, 0.05, grid, lin=np.linalg.inv(T))
    X1, X2 = grid.mesh()
    mask = (X2 > 0) & (X2 < X1) & (np.hypot(X1, X2) < 1.0)
    chart = canonical_coeffs(frame, None, "elliptic", sched_delta,
                             kbar_check_mask=mask)
    return frame, chart, mask


def test_canonical_mixed_coefficient_vanishes(m1_elliptic_chart):
    _, chart, _ = m1_elliptic_chart
    assert chart.a4_12_max <= 1e-10


def test_canonical_kbar_and_sign(m1_elliptic_chart):
    frame, chart, mask = m1_elliptic_chart
    assert np.min(chart.kbar[mask]) > 0.5
    assert np.all(np.sign(chart.k[mask]) == np.sign(frame.curv[mask]))


def test_canonical_operator_identity(m1_elliptic_chart):
    frame, chart, mask = m1_elliptic_chart
    rng = np.random.default_rng(11)
    X1, X2 = frame.grid.mesh()
    inner = mask.copy()
    inner[:4, :] = inner[-4:, :] = False
    inner[:, :4] = inner[:, -4:] = False
    h = max(frame.grid.h)
    for trial in range(10):
        c = rng.normal(size=4)
        expr = Expr2(
            f"sin({1 + 0.3 * c[0]:.4f}*u + {0.2 * c[1]:.4f})"
            f"*cos({1 + 0.3 * c[2]:.4f}*v) + {0.2 * c[3]:.4f}*u*u*v",
            variables=("u", "v"),
        )
        ud = {(a, b): expr.eval_deriv(a, b, X1, X2)
              for (a, b) in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))}
        err = operator_identity_error(frame, None, chart, ud, mask=inner)
        assert err <= 10 * h * h


def test_flat_metric_canonical_coefficients_vanish():
    from darboux.catalog import flat_metric
    from darboux.jets import PolyJet

    z0 = PolyJet(4)
    z0.coef[2, 0] = 0.5
    grid = Grid.snapped((-0.06, 1.25, -0.06, 1.25), (65, 65))
    frame = build_xframe(flat_metric(), z0, 0.05, grid)
    X1, X2 = grid.mesh()
    mask = (X2 > 0) & (X2 < X1) & (np.hypot(X1, X2) < 1.0)
    chart = canonical_coeffs(frame, None, "elliptic", math.pi / 16,
                             kbar_check_mask=None, kbar_floor=-np.inf)
    assert np.max(np.abs(chart.k[mask])) < 1e-12
    assert np.max(np.abs(chart.c[mask])) < 1e-9


def test_polar_coeffs_displays():
    g = Grid((0.0, 2.0, 0.0, math.pi / 16), (65, 33))
    R, TH = g.mesh()
    ones = np.ones(g.shape)
    zero = np.zeros(g.shape)
    raw, cut = polar_coeffs(ones, zero, zero, zero, g, sigma=1.0)
    KK, A, B, C, D = raw
    inner = R > 0.05
    assert np.max(np.abs(KK - 1.0)) < 1e-12
    assert np.max(np.abs(A[inner])) < 1e-12
    assert np.max(np.abs((B - 1 / np.where(R > 0, R, 1) ** 2))[inner]) < 1e-9
    assert np.max(np.abs((C - 1 / np.where(R > 0, R, 1)))[inner]) < 1e-9
    assert np.max(np.abs(D[inner])) < 1e-12
    # theta = 0 row: KK = k for any k field
    k = 0.3 + 0.1 * R
    raw2, _ = polar_coeffs(k, zero, zero, zero, g, sigma=1.0)
    assert np.max(np.abs(raw2[0][:, 0] - k[:, 0])) < 1e-12
    # cutoff support: beyond sigma everything except B vanishes
    KKc, Ac, Bc, Cc, Dc = cut
    far = R > 1.0 + 1e-9
    for arr in (KKc, Ac, Cc, Dc):
        assert np.max(np.abs(arr[far])) == 0.0
    assert np.array_equal(Bc, B)


def test_cutoff_profile_plateau():
    r = np.linspace(0, 2, 101)
    phi = cutoff_profile(r, 1.0)
    assert np.all(phi[r < 0.5] == 1.0)
    assert np.all(phi[r > 1.0] == 0.0)
    assert np.all((phi >= 0) & (phi <= 1))
