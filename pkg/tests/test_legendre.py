import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab.legendre import (PolynomialBump, affine_covariance_check,
                                  auto_dual_grid, conj1d_brute, conj1d_hull,
                                  conjugate, fenchel_young_gap, involution_error,
                                  loglog_slope, node_sup_values,
                                  perturbation_expansion_check,
                                  smooth_duality_check, support_plane_values)
from santalo_lab.numgrid import BoxGrid, EmptyDomain, build_grid_fn
from santalo_lab.potentials import PowerNormPotential, canonical


def test_gaussian_self_dual(gaussian_1d):
    pair = conjugate(gaussian_1d)
    y = pair.dual_grid.axis(0)
    live = np.abs(y) < 5.0    # inside the slope range of the box
    assert np.abs(pair.dual.values[live] - 0.5 * y[live] ** 2).max() < 5e-3
    assert pair.dual.even and pair.dual.convex_certified
    assert pair.fy_violation == 0.0


def test_abs_value_dual_is_indicator():
    g = BoxGrid.cube(1, 6.0, 256)
    f = build_grid_fn(lambda p: np.abs(p[:, 0]), g)
    pair = conjugate(f)
    y = pair.dual_grid.axis(0)
    inside = np.abs(y) <= 0.98
    assert np.abs(pair.dual.values[inside]).max() <= g.spacing(0)
    outside = np.abs(y) >= 1.02
    assert pair.dual.values[outside].min() > 0


def test_power_norm_dual_pair():
    # (1/3)|x|_3^3 in the plane has conjugate (1/1.5)|y|_{1.5}^{1.5}
    V = canonical(3, 3, 2)
    W = V.dual()
    assert np.isclose(W.p, 1.5) and np.isclose(W.q, 1.5) and np.isclose(W.c, 1 / 1.5)
    g = BoxGrid.cube(2, 2.6, 128)
    f = build_grid_fn(lambda p: V(p), g)
    pair = conjugate(f)
    ypts = pair.dual_grid.points()
    rep = W.grad(ypts)  # compare only where the slope range covers grad V*
    live = np.max(np.abs(rep), axis=1) < 0.9 * min(g.half_widths)
    gap = np.abs(pair.dual.values.ravel()[live] - W(ypts[live])).max()
    assert gap <= 10 * g.spacing(0)


def test_empty_domain_raises():
    g = BoxGrid.cube(1, 1.0, 32)
    f = build_grid_fn(lambda p: np.full(len(p), np.inf), g, certify=False)
    with pytest.raises(EmptyDomain):
        conjugate(f)


def test_involution_error_bounds(gaussian_1d):
    assert involution_error(gaussian_1d) <= 5 * gaussian_1d.grid.spacing(0)
    # |x|^4/4: error halves (+-20%) at the first refinement
    e = []
    for N in (128, 256):
        f = build_grid_fn(lambda p: 0.25 * p[:, 0] ** 4, BoxGrid.cube(1, 3.0, N))
        e.append(involution_error(f))
    assert 1.6 <= e[0] / e[1] <= 2.5
    # piecewise max of even affine pairs: error bounded by h * slope range
    slopes = [0.2, 0.7, 1.1, 1.6, 2.0]
    offs = [0.3, 0.1, -0.2, -0.8, -1.5]

    def expr(p):
        x = np.abs(p[:, 0])
        return np.max([s * x + o for s, o in zip(slopes, offs)], axis=0)

    f = build_grid_fn(expr, BoxGrid.cube(1, 3.0, 256))
    assert involution_error(f) <= f.grid.spacing(0) * (slopes[-1] - slopes[0] + 1)


def test_fenchel_young_gap(gaussian_1d):
    pair = conjugate(gaussian_1d)
    # paired points y = grad Phi(x): gap vanishes up to discretization
    xs = np.linspace(-2, 2, 41)[:, None]
    gap, _ = fenchel_young_gap(pair, (xs, xs))  # grad = identity for x^2/2
    assert abs(gap) < 5e-3
    # off-diagonal pairs are strictly positive
    gap2, _ = fenchel_young_gap(pair, (xs, xs + 1.5))
    assert gap2 > 0.5
    # node pairs never go below -tolerance (discrete sup property)
    gap3, _ = fenchel_young_gap(pair)
    assert gap3 >= -1e-12


def test_closed_form_pair_gap_at_gradient_points(rng):
    V = canonical(3, 1.5, 2)
    W = V.dual()
    x = rng.uniform(0.2, 1.5, size=(200, 2)) * rng.choice([-1, 1], size=(200, 2))
    y = V.grad(x)
    gap = V(x) + W(y) - np.sum(x * y, axis=1)
    assert np.abs(gap).max() < 1e-6


def test_affine_covariance():
    g = BoxGrid.cube(1, 6.0, 256)
    f = build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1), g)
    assert affine_covariance_check(f, np.eye(1), 1.0) < 1e-9
    g2 = BoxGrid.cube(2, 6.0, 96)
    f2 = build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1), g2)
    assert affine_covariance_check(f2, np.diag([2.0, 0.5]), 0.0) < 0.02
    f4 = build_grid_fn(lambda p: 0.25 * np.sum(p ** 4, axis=-1), BoxGrid.cube(2, 3.2, 96))
    A = np.array([[1.1, 0.2], [0.2, 0.9]])
    assert affine_covariance_check(f4, A, 0.0) <= 10 * f4.grid.spacing(0)


def test_perturbation_expansion():
    V = PowerNormPotential(0.5, 2, 2, 1)
    bump = PolynomialBump(0.7, 1.2, 1)
    pts = np.linspace(-0.9, 0.9, 9)[:, None]
    out = perturbation_expansion_check(V, bump, [1e-1, 1e-2, 1e-3], pts)
    res = dict(out)
    assert res[1e-2] <= 1e-5
    assert loglog_slope(out) >= 2.7
    zero = perturbation_expansion_check(V, PolynomialBump(0.0, 1.0, 1), [1e-2], pts)
    assert zero[0][1] < 1e-12


def test_smooth_duality_identities(rng):
    V = canonical(4, 4, 2)
    pts = rng.uniform(0.3, 1.5, size=(100, 2)) * rng.choice([-1, 1], size=(100, 2))
    d1, d2, d3 = smooth_duality_check(V, pts)
    assert max(d1, d2, d3) < 1e-10
    # p-homogeneity: <x, grad V> = p V
    V3 = canonical(3, 2, 2)
    x = rng.uniform(0.2, 1.0, size=(50, 2))
    assert np.abs(np.sum(x * V3.grad(x), axis=1) - 3 * V3(x)).max() < 1e-12


def test_order_reversing_and_lower_bound(rng):
    g = BoxGrid.cube(1, 4.0, 128)
    a1, a2 = sorted(rng.uniform(0.4, 2.0, 2))
    f = build_grid_fn(lambda p: a1 * p[:, 0] ** 2, g)       # f <= g pointwise
    h = build_grid_fn(lambda p: a2 * p[:, 0] ** 2, g)
    grid_d = auto_dual_grid(h)
    pf = conjugate(f, dual_grid=grid_d)
    ph = conjugate(h, dual_grid=grid_d)
    assert np.all(ph.dual.values <= pf.dual.values + 1e-12)
    # conjugate lower bound <x0, y> - f(x0)
    x0 = g.axis(0)[100]
    y = grid_d.axis(0)
    assert np.all(pf.dual.values >= x0 * y - f.values[100] - 1e-12)


def test_evenness_preserved(gaussian_2d):
    # dual axis symmetry is exact only to rounding of the auto box width
    pair = conjugate(gaussian_2d)
    v = pair.dual.values
    scale = np.abs(v).max()
    assert np.abs(v - v[::-1, ::-1]).max() <= 1e-12 * scale


def test_factorized_equals_bruteforce_exactly():
    g = BoxGrid.cube(2, 3.0, 64)
    f = build_grid_fn(
        lambda p: np.abs(p[:, 0]) ** 3 / 3 + 0.3 * np.abs(p[:, 0] * p[:, 1]) + p[:, 1] ** 2, g)
    pair = conjugate(f)
    X = g.points()
    Y = pair.dual_grid.points()
    fv = f.values.ravel()
    brute = np.full(len(Y), -np.inf)
    for i in range(len(X)):
        if np.isfinite(fv[i]):
            cand = X[i, 0] * Y[:, 0] + (X[i, 1] * Y[:, 1] - fv[i])
            brute = np.maximum(brute, cand)
    assert np.array_equal(pair.dual.values.ravel(), brute)


def test_hull_matches_brute_1d(rng):
    x = np.sort(rng.uniform(-3, 3, 81))
    fvals = rng.normal(size=81) + x ** 2
    y = np.linspace(-5, 5, 67)
    hull_v, _ = conj1d_hull(x, fvals, y)
    assert np.allclose(hull_v, conj1d_brute(x, fvals, y), rtol=0, atol=1e-12)


def test_support_planes_and_windowed_sup(rng, gaussian_2d):
    pair = conjugate(gaussian_2d)
    zn = pair.dual_grid.points()[::97]
    sv = support_plane_values(pair, zn)
    assert np.abs(sv - pair.dual.values.ravel()[::97]).max() < 1e-10
    Z = rng.uniform(-3, 3, size=(200, 2))
    X = gaussian_2d.grid.points()
    fv = gaussian_2d.values.ravel()
    brute = np.max(Z @ X.T - fv[None, :], axis=1)
    assert np.abs(node_sup_values(pair, Z) - brute).max() < 1e-10


@given(st.floats(0.5, 3.0), st.floats(-1.0, 1.0))
@settings(max_examples=20, deadline=None)
def test_conjugate_of_scaled_quadratic(a, shift):
    # (a x^2/2 + shift)* = y^2/(2a) - shift on the covered range
    g = BoxGrid.cube(1, 5.0, 128)
    f = build_grid_fn(lambda p: 0.5 * a * p[:, 0] ** 2 + shift, g)
    pair = conjugate(f)
    y = pair.dual_grid.axis(0)
    live = np.abs(y) < 0.8 * a * 5.0
    ref = 0.5 * y[live] ** 2 / a - shift
    assert np.abs(pair.dual.values[live] - ref).max() < 0.05 * max(1.0, a)
