import numpy as np
import pytest

from santalo_lab.functionals import (BSParams, bs_general, bs_pv,
                                     build_member, classical_params,
                                     isotropic_normalize, main_inequality_check,
                                     radial_inequality_check, random_even_convex,
                                     scaling_invariance_check, validate_member,
                                     ValidationError)
from santalo_lab.numgrid import (BoxGrid, build_grid_fn, unit_density,
                                 radial_power_density)
from santalo_lab.potentials import canonical


def test_ball_equality_1d(gaussian_1d):
    rep = bs_general(gaussian_1d, classical_params(1))
    assert abs(rep.value - 2 * np.pi) <= 3 * rep.value_err
    assert abs(rep.value - 2 * np.pi) < 1e-3 * 2 * np.pi


def test_ball_equality_2d(gaussian_2d):
    rep = bs_general(gaussian_2d, classical_params(2))
    assert abs(rep.value - (2 * np.pi) ** 2) < 1e-3 * (2 * np.pi) ** 2


def test_abs_value_classical():
    g = BoxGrid.cube(1, 6.0, 512)
    phi = build_grid_fn(lambda p: np.abs(p[:, 0]), g)
    rep = bs_general(phi, classical_params(1))
    # 2 * int_{[-1,1]} e^0 = 4 < 2 pi; dual-domain truncation is charged to err
    assert abs(rep.value - 4.0) <= rep.value_err
    assert rep.value < 2 * np.pi


def test_validation_gate():
    g = BoxGrid.cube(1, 4.0, 64)
    shifted = build_grid_fn(lambda p: (p[:, 0] - 1) ** 2, g)
    with pytest.raises(ValidationError):
        validate_member(shifted)


def test_bs_pv_gaussian_and_scaling(gaussian_1d):
    V = canonical(2, 2, 1)
    rep = bs_pv(gaussian_1d, 2.0, V)
    assert abs(rep.value - 2 * np.pi) <= 3 * rep.value_err
    # Phi(2x) leaves the functional unchanged
    g = BoxGrid.cube(1, 3.0, 512)
    phi2 = build_grid_fn(lambda p: 0.5 * np.sum((2 * p) ** 2, axis=-1), g)
    rep2 = bs_pv(phi2, 2.0, V)
    assert abs(rep2.value - rep.value) <= 3 * (rep.value_err + rep2.value_err)


def test_bs_pv_equality_p4_q2_n1():
    V = canonical(4, 2, 1)
    phi = build_member(lambda p: V(p), 1, N=512)
    rep = bs_pv(phi, 4.0, V)
    rhs = V.lebesgue_mass() ** 4
    assert abs(rep.value - rhs) <= 3 * rep.value_err
    assert abs(rep.value - rhs) < 3e-3 * rhs


def test_scaling_invariance_examples(gaussian_2d):
    V = canonical(2, 2, 2)
    assert scaling_invariance_check(gaussian_2d, 2.0, V, [1.0]) < 1e-12
    assert scaling_invariance_check(gaussian_2d, 2.0, V, [2.0]) < 1e-3
    V4 = canonical(4, 4, 2)
    phi4 = build_member(lambda p: V4(p), 2, N=160)
    assert scaling_invariance_check(phi4, 4.0, V4, [0.5]) < 1e-3


def test_isotropic_normalize_examples():
    g = BoxGrid.cube(1, 6.0, 512)
    phi = build_grid_fn(lambda p: np.sum(p ** 2, axis=-1), g)
    amap, out = isotropic_normalize(phi)
    # x^2 -> x^2/2 + log sqrt(2 pi)
    x = out.grid.axis(0)
    ref = 0.5 * x ** 2 + np.log(np.sqrt(2 * np.pi))
    live = np.abs(x) < 4
    assert np.abs(out.values[live] - ref[live]).max() < 1e-3
    from santalo_lab.numgrid import covariance
    Z, cov = covariance(out)
    assert abs(Z - 1.0) < 1e-3 and abs(cov[0, 0] - 1.0) < 1e-3

    g2 = BoxGrid.cube(2, 8.0, 160)
    phi2 = build_grid_fn(lambda p: 0.5 * ((p[:, 0] / 2) ** 2 + p[:, 1] ** 2), g2)
    amap2, out2 = isotropic_normalize(phi2)
    Z2, cov2 = covariance(out2)
    assert np.abs(cov2 - np.eye(2)).max() < 1e-3
    # already isotropic input: A close to the identity
    phi3 = build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1) +
                         np.log(2 * np.pi), BoxGrid.cube(2, 6.0, 160))
    amap3, _ = isotropic_normalize(phi3)
    assert np.abs(amap3.matrix - np.eye(2)).max() < 5e-3


def test_main_inequality_equality_and_random(rng):
    V = canonical(4, 2, 2)
    phiV = build_member(lambda p: V(p), 2, N=160)
    mr = main_inequality_check(phiV, 4.0, V)
    assert mr.classification == "equality"
    for _ in range(3):
        phi = build_member(random_even_convex(rng, 2), 2, N=128)
        out = main_inequality_check(phi, 4.0, V)
        assert out.margin >= -3 * out.err


def test_needle_violation_small_p():
    from santalo_lab.bodies import needle_body
    from santalo_lab.numgrid import suggest_half_widths
    p = 1.2
    V = canonical(p, p, 2)
    K = needle_body(2.0, k=360).polar()
    expr = lambda pts: K.gauge(np.atleast_2d(pts)) ** p
    phi = build_grid_fn(expr, BoxGrid(2, suggest_half_widths(expr, 2), (384, 384)))
    phi.homogeneity = p
    out = main_inequality_check(phi, p, V)
    assert out.classification == "violated"


def test_radial_inequality():
    # the transport optimizer is the dual-degree power r^{p*}/p*
    ps = 3.0 / 2.0
    out = radial_inequality_check(lambda r: r ** ps / ps, 3.0, 2)
    assert abs(out.margin) <= 3 * out.err
    assert abs(out.margin) < 1e-3 * out.rhs
    out2 = radial_inequality_check(lambda r: r ** 2 / 2.0, 3.0, 2)
    assert out2.margin >= -3 * out2.err
    # the primal-degree profile satisfies the inequality strictly
    out2b = radial_inequality_check(lambda r: r ** 3 / 3.0, 3.0, 2)
    assert out2b.margin > 3 * out2b.err
    out3 = radial_inequality_check(lambda r: 0.8 * r ** 2, 2.0, 2)
    assert out3.margin >= -3 * out3.err            # p = 2 is classical radial BS


def test_affine_invariance_of_classical(rng, gaussian_2d):
    base = bs_general(gaussian_2d, classical_params(2))
    A = np.array([[1.2, 0.3], [0.3, 0.9]])
    b = 0.4
    g = BoxGrid.cube(2, 7.0, 192)
    phi = build_grid_fn(lambda p: gaussian_2d.evaluator(p @ A.T) + b, g)
    rep = bs_general(phi, classical_params(2))
    assert abs(rep.value - base.value) <= 3 * (rep.value_err + base.value_err)


def test_conjugation_symmetry(gaussian_1d):
    from santalo_lab.functionals import mass_sized_pair
    pair = mass_sized_pair(gaussian_1d, 1.0)
    rep1 = bs_general(gaussian_1d, classical_params(1))
    rep2 = bs_general(pair.dual, classical_params(1), validate=False)
    assert abs(rep1.value - rep2.value) <= 3 * (rep1.value_err + rep2.value_err)


def test_monotone_dependence():
    g = BoxGrid.cube(1, 6.0, 256)
    lo = build_grid_fn(lambda p: 0.4 * p[:, 0] ** 2, g)
    hi = build_grid_fn(lambda p: 0.6 * p[:, 0] ** 2, g)
    from santalo_lab.functionals import mass_sized_pair
    from santalo_lab.numgrid import integrate_exp
    f1lo, _ = integrate_exp(lo, unit_density(1), 1.0)
    f1hi, _ = integrate_exp(hi, unit_density(1), 1.0)
    assert f1lo > f1hi           # larger potential, smaller primal factor
    plo, phi_ = mass_sized_pair(lo, 1.0), mass_sized_pair(hi, 1.0)
    f2lo, _ = integrate_exp(plo.dual, unit_density(1), 1.0)
    f2hi, _ = integrate_exp(phi_.dual, unit_density(1), 1.0)
    assert f2lo < f2hi           # conjugation reverses the order


def test_route_consistency_runs(rng):
    # the weighted and direct dual-factor routes agree (no RouteMismatch)
    for (p, q) in [(2, 2), (3, 2), (4, 3)]:
        V = canonical(p, q, 2)
        phi = build_member(random_even_convex(rng, 2), 2, N=128)
        bs_pv(phi, p, V)


def test_report_serialization(gaussian_1d):
    rep = bs_general(gaussian_1d, classical_params(1))
    d = rep.to_dict()
    assert set(d) >= {"value", "factor1", "factor2", "err1", "err2", "bias_note"}
    assert "upward" in d["bias_note"]
