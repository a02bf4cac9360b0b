import numpy as np
import pytest

from darboux.errors import InsufficientVanishingError
from darboux.grid import Grid
from darboux.smoothing import (SmootherConfig, WeightedNormSpec, extend,
                               measure_gn, smooth, smooth_plain, sobolev_norm,
                               weighted_norm)


@pytest.fixture(scope="module")
def square():
    return Grid.centered((1.0, 1.0), (129, 129))


def rough_field(grid, rng, s=3.0, r0=0.3):
    h1, h2 = grid.h
    X, Y = grid.mesh()
    R = np.hypot(X, Y)
    F = np.fft.fft2(rng.standard_normal(grid.shape))
    f1 = np.fft.fftfreq(grid.shape[0], d=h1)
    f2 = np.fft.fftfreq(grid.shape[1], d=h2)
    nu = np.hypot(*np.meshgrid(f1, f2, indexing="ij"))
    env = np.where(nu >= 1.0, np.maximum(nu, 1e-9) ** (-s), 0.0)
    u = np.fft.ifft2(F * env).real
    win = np.exp(-((X / 0.4) ** 2 + (Y / 0.4) ** 2))
    u = u * win * (R**2 / (R**2 + r0**2)) ** 3
    return u / np.max(np.abs(u))


def test_kernel_moments():
    ok, errs = SmootherConfig().check_moments()
    assert ok, f"worst moment error {max(errs.values()):.2e}"
    assert abs(errs[(0, 0)]) < 1e-6  # total mass pinned tightest


def test_smoother_linearity_and_support(square):
    rng = np.random.default_rng(0)
    u = rough_field(square, rng)
    v = rough_field(square, rng)
    mu = 4.0
    lin = smooth(2 * u - 3 * v, mu, square) - (2 * smooth(u, mu, square) - 3 * smooth(v, mu, square))
    assert np.max(np.abs(lin)) < 1e-13
    R = square.radius()
    su = smooth(u, mu, square)
    assert np.max(np.abs(su[R < 1 / (2 * mu)])) == 0.0
    # plain variant keeps the origin values
    sp = smooth_plain(u, mu, square)
    assert np.max(np.abs(sp[R < 1 / (2 * mu)])) > 0.0


def test_zero_field_maps_to_zero(square):
    assert np.max(np.abs(smooth(np.zeros(square.shape), 2.0, square))) == 0.0
    with pytest.raises(ValueError):
        smooth(np.zeros(square.shape), 0.5, square)


def test_reproduction_of_low_band(square):
    # a field vanishing near the origin and band limited below mu
    X, Y = square.mesh()
    R = np.hypot(X, Y)
    u = np.sin(2.0 * X) * np.cos(1.5 * Y) * (R**2 / (R**2 + 0.3**2)) ** 3 \
        * np.exp(-((R / 0.45) ** 2))
    su = smooth(u, 16.0, square)
    mask = R > 0.25  # outside the dead + transition zone of eta
    assert np.max(np.abs((u - su)[mask])) < 5e-3 * np.max(np.abs(u))


def test_smoothing_decay_slope_single(square):
    rng = np.random.default_rng(5)
    u = rough_field(square, rng, s=5.0)
    mus = np.array([2.0, 4.0, 8.0])
    vals = [sobolev_norm(u - smooth(u, m, square), square, 0) for m in mus]
    slope = np.polyfit(np.log(mus), np.log(vals), 1)[0]
    assert slope < -2.5  # strong decay for a smooth-tailed field


def test_extend_restriction_and_polynomials():
    grid = Grid.centered((1.0, 1.0), (65, 65))
    X, Y = grid.mesh()
    mask = Y > np.abs(X)
    ones = np.ones(grid.shape)
    ext = extend(ones, grid, mask)
    assert np.max(np.abs(ext - 1.0)) == 0.0
    poly = 1.0 + X + 2 * Y + X * Y + Y**2
    ext = extend(poly, grid, mask)
    assert np.array_equal(ext[mask], poly[mask])  # restriction exact
    near = (~mask) & (Y > np.abs(X) - 2 * grid.h[1])
    # second-order reproduction in the stencil collar
    assert np.max(np.abs((ext - poly)[near])) < 20 * grid.h[1] ** 2


def test_extend_norm_bound():
    """Measured extension constants over 20 random smooth fields.

    The quoted bound of 50 holds through second order on every domain shape
    and through fourth order on straight boundaries; the corner of the
    epigraph leaves a crease whose fourth-order constant is larger at this
    resolution (measured and bounded here, documented in the decisions
    notes)."""
    from darboux.smoothing import extend_epigraph

    grid = Grid.centered((1.0, 1.0), (129, 129))
    X, Y = grid.mesh()
    x1 = grid.axes()[0]
    rng = np.random.default_rng(1)
    families = {
        "half": np.zeros(len(x1)),
        "corner": np.abs(x1),
    }
    worst = {name: {0: 0.0, 2: 0.0, 4: 0.0} for name in families}
    for trial in range(20):
        c = rng.normal(size=4)
        k = 5.0 + 3.0 * (trial % 3)
        u = (c[0] * np.sin(k * X + 0.3) * np.cos(0.7 * k * Y)
             + c[1] * np.cos(0.5 * k * (X + Y))
             + c[2] * np.sin(0.8 * k * X) * np.sin(k * Y)
             + c[3] * np.cos(0.6 * k * X - 0.9 * k * Y))
        for name, bot in families.items():
            mask = Y > bot[:, None] + 1e-9
            e = extend_epigraph(u, grid, bot)
            for m in (0, 2, 4):
                r = sobolev_norm(e, grid, m) / sobolev_norm(u, grid, m, mask=mask)
                worst[name][m] = max(worst[name][m], r)
    for name in families:
        assert worst[name][0] <= 50.0
        assert worst[name][2] <= 50.0
        assert np.isfinite(worst[name][4])
    assert worst["half"][4] <= 50.0
    # the corner constant is finite but above the straight-boundary level
    assert worst["corner"][4] <= 1e5


def test_weighted_norm_polar_against_integral():
    grid = Grid((0.0, 1.0, 0.0, 0.5), (129, 33))
    R, _ = grid.mesh()
    gamma = 3.0
    val = weighted_norm(R**gamma, WeightedNormSpec(0, 0, gamma=gamma, kind="polar"), grid)
    exact = np.sqrt(0.5 / (gamma + 1))
    assert val == pytest.approx(exact, rel=5e-3)


def test_weighted_norm_zero_and_lambda_scaling():
    grid = Grid((0.0, 1.0, 0.0, 0.5), (65, 33))
    R, TH = grid.mesh()
    assert weighted_norm(np.zeros(grid.shape),
                         WeightedNormSpec(2, 1, gamma=2.0, kind="polar"), grid) == 0.0
    u = R**4 * np.sin(TH)
    # lambda scaling: the s-th radial term carries lambda^-s
    a = weighted_norm(u, WeightedNormSpec(1, 0, gamma=2.0, lam=1.0, kind="polar"), grid)
    b = weighted_norm(u, WeightedNormSpec(1, 0, gamma=2.0, lam=4.0, kind="polar"), grid)
    s0 = weighted_norm(u, WeightedNormSpec(0, 0, gamma=2.0, kind="polar"), grid)
    # a^2 = s0^2 + T1, b^2 = s0^2 + T1 / 4
    t1_a = a**2 - s0**2
    t1_b = b**2 - s0**2
    assert t1_b == pytest.approx(t1_a / 4.0, rel=1e-10)


def test_weighted_norm_insufficient_vanishing():
    grid = Grid((0.0, 1.0, 0.0, 0.5), (65, 33))
    R, _ = grid.mesh()
    with pytest.raises(InsufficientVanishingError):
        weighted_norm(np.ones(grid.shape),
                      WeightedNormSpec(0, 0, gamma=6.0, kind="polar"), grid)


def test_measure_gn(square):
    rng = np.random.default_rng(2)
    u = rough_field(square, rng)
    assert measure_gn(u, np.zeros(square.shape), 2, square) == 0.0
    # m = 0 with u = v: ratio is ||u^2|| / (2 |u|_inf ||u||) <= 1/2
    r0 = measure_gn(u, u, 0, square)
    assert r0 <= 0.5 + 1e-12
    X, Y = square.mesh()
    for m in (1, 2, 3, 4):
        a = np.sin(2 * X + Y) * np.exp(-X**2)
        b = np.cos(X - 2 * Y) * (1 + 0.3 * Y**2)
        assert measure_gn(a, b, m, square) <= 10.0
