import numpy as np
import pytest

from darboux.catalog import (flat_metric, graph_curvature, graph_metric,
                             m1_metric, polar_type_metric, sphere_chart_metric,
                             M1_HEIGHT)
from darboux.errors import DegenerateMetricError
from darboux.expr import Expr2
from darboux.frames import build_xframe
from darboux.grid import Grid, ScalarField
from darboux.jets import PolyJet
from darboux.metric import (MetricField, christoffel, cov_hessian,
                            darboux_residual, gauss_curvature,
                            apply_linearization, vanishing_order)


def grid(n=65, a=0.5):
    return Grid.centered((a, a), (n, n))


def max_err(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# ---------------------------------------------------------------- christoffel
def test_christoffel_flat_zero():
    cache = christoffel(flat_metric().sample(grid()))
    assert np.max(np.abs(cache.gamma)) == 0.0


def test_christoffel_polar_type_oracle():
    # g = diag(1, (r0 + u)^2): nonzero symbols are G^1_22 = -(r0+u),
    # G^2_12 = 1 / (r0 + u)
    m = polar_type_metric(r0=2.0)
    errs = []
    for n in (33, 65):
        g = grid(n)
        U, _ = g.mesh()
        cache = christoffel(m.sample(g))
        e = max(
            max_err(cache.gamma[0, 1, 1], -(2.0 + U)),
            max_err(cache.gamma[1, 0, 1], 1.0 / (2.0 + U)),
            float(np.max(np.abs(cache.gamma[0, 0, 0]))),
        )
        errs.append(e)
    assert errs[0] < 2e-3
    # quadratic components differentiate exactly; otherwise demand order 2
    assert errs[1] < 1e-12 or errs[0] / errs[1] > 3.5


def test_christoffel_graph_oracle():
    m = m1_metric()
    F = Expr2(M1_HEIGHT)
    errs = []
    for n in (33, 65):
        g = grid(n)
        U, V = g.mesh()
        cache = christoffel(m.sample(g))
        fu = F.eval_deriv(1, 0, U, V)
        fv = F.eval_deriv(0, 1, U, V)
        w2 = 1 + fu**2 + fv**2
        fij = {(0, 0): F.eval_deriv(2, 0, U, V), (0, 1): F.eval_deriv(1, 1, U, V),
               (1, 1): F.eval_deriv(0, 2, U, V)}
        worst = 0.0
        for l, gradl in ((0, fu), (1, fv)):
            for (i, j), fij_v in fij.items():
                worst = max(worst, max_err(cache.gamma[l, i, j], gradl * fij_v / w2))
        errs.append(worst)
    assert errs[0] / errs[1] > 3.5


def test_christoffel_symmetry_exact():
    cache = christoffel(m1_metric().sample(grid(33)))
    for l in range(2):
        assert np.array_equal(cache.gamma[l, 0, 1], cache.gamma[l, 1, 0])


def test_degenerate_metric_reports_location():
    g = grid(17, a=1.5)
    U, V = g.mesh()
    with pytest.raises(DegenerateMetricError) as err:
        MetricField(g, 1.0 - U**2 + 0 * V, 0 * U, 1.0 + 0 * U)
    assert err.value.location is not None


# ---------------------------------------------------------------- curvature
def test_curvature_flat_and_sphere():
    K = gauss_curvature(flat_metric().sample(grid()))
    assert np.max(np.abs(K.values)) < 1e-12
    K = gauss_curvature(sphere_chart_metric().sample(grid(65, a=0.4)))
    assert max_err(K.values, 1.0) < 1e-3


def test_curvature_graph_convergence_order():
    m = m1_metric()
    oracle = graph_curvature(M1_HEIGHT)
    errs = []
    for n in (33, 65, 129):
        g = grid(n)
        U, V = g.mesh()
        errs.append(max_err(gauss_curvature(m.sample(g)).values, oracle(U, V)))
    assert np.log2(errs[0] / errs[2]) / 2 > 1.8


def test_vanishing_order_cases():
    g = grid(65)
    assert vanishing_order(ScalarField.from_function(g, lambda u, v: 1 + 0 * u)) == -1
    assert vanishing_order(ScalarField.from_function(g, lambda u, v: u * v)) == 1
    assert vanishing_order(ScalarField.from_function(g, lambda u, v: u**2 * v**2)) == 3


# ---------------------------------------------------------------- hessian
def test_cov_hessian_flat_is_hessian():
    g = grid(33)
    z = ScalarField.from_function(g, lambda u, v: u**2 * v + v**2)
    H11, H12, H22 = cov_hessian(flat_metric().sample(g), z)
    U, V = g.mesh()
    assert max_err(H11, 2 * V) < 1e-9
    assert max_err(H12, 2 * U) < 1e-9
    assert max_err(H22, 2 + 0 * U) < 1e-9


def test_cov_hessian_linear_z_and_symmetry():
    g = grid(33)
    m = polar_type_metric()
    z = ScalarField.from_function(g, lambda u, v: 2 * u - 3 * v)
    cache = christoffel(m.sample(g))
    H11, H12, H22 = cov_hessian(m.sample(g), z, cache)
    # pure first-order part: -G^l_ij dz_l with dz = (2, -3)
    assert max_err(H11, -(2 * cache.gamma[0, 0, 0] - 3 * cache.gamma[1, 0, 0])) < 1e-8
    assert max_err(H12, -(2 * cache.gamma[0, 0, 1] - 3 * cache.gamma[1, 0, 1])) < 1e-8


# ---------------------------------------------------------------- residual
def test_darboux_residual_trivial_cases():
    g = grid(33)
    flat = flat_metric().sample(g)
    z0 = ScalarField.from_function(g, lambda u, v: 0 * u)
    assert np.max(np.abs(darboux_residual(flat, z0).values)) < 1e-14
    zq = ScalarField.from_function(g, lambda u, v: 0.5 * (u**2 + v**2))
    assert max_err(darboux_residual(flat, zq).values, 1.0) < 1e-9


@pytest.mark.parametrize("height", [M1_HEIGHT, "(u^3 + v^3)/6"])
def test_gauss_identity_order(height):
    m = graph_metric(height)
    F = Expr2(height)
    errs = []
    for n in (33, 65, 129):
        g = grid(n)
        z = ScalarField.from_function(g, lambda u, v: F(u, v))
        errs.append(float(np.max(np.abs(darboux_residual(m.sample(g), z).values))))
    assert np.log2(errs[0] / errs[2]) / 2 > 1.8


# ---------------------------------------------------------------- linearization
def test_linearization_directional_derivative(m1_rotated, m1_seed4):
    frame = build_xframe(m1_rotated, m1_seed4, 0.05, grid(65, a=1.0))
    rng = np.random.default_rng(7)
    X1, X2 = frame.grid.mesh()
    inner = np.zeros(frame.grid.shape, bool)
    inner[4:-4, 4:-4] = True
    for trial in range(10):
        cw = rng.normal(size=4) * 0.3
        cu = rng.normal(size=4) * 0.5
        W = cw[0] * np.sin(X1) * np.cos(X2) + cw[1] * X1 * X2 + cw[2] * X1**2 + cw[3] * X2**2
        U = cu[0] * np.cos(X1) + cu[1] * X2**2 + cu[2] * X1 * X2 + cu[3] * np.sin(2 * X2)
        lin = 0.05 * apply_linearization(frame, W, U)
        errs = []
        for t in (1e-3, 5e-4):
            fd = (frame.phi(W + t * U) - frame.phi(W)) / t
            errs.append(np.max(np.abs((fd - lin))[inner]))
        # first order in t: halving t roughly halves the error
        assert errs[1] < 0.7 * errs[0] + 1e-14


def test_linearization_flat_quadratic_closed_form():
    # flat metric, w = 0: cofactor of Hess z0 acting on a quadratic probe
    flat = flat_metric()
    z0 = PolyJet(4)
    z0.coef[2, 0] = 0.5
    g = grid(33, a=1.0)
    frame = build_xframe(flat, z0, 0.1, g)
    X1, X2 = g.mesh()
    U = X1**2 + 3 * X1 * X2 - X2**2
    out = apply_linearization(frame, None, U)
    # a = cof(diag(1, 0)) = diag(0, 1): a^{ij} u_ij = u_22 = -2; K term absent
    assert np.max(np.abs(out + 2.0)) < 1e-8
