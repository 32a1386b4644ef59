import numpy as np
import pytest
from scipy import integrate as si
from scipy.special import gamma as G

from santalo_lab.bodies import (NotOneSymmetric, OriginNotInterior, Polytope,
                                bs_bodies_ratio_constant, bs_equals_bodies_check,
                                grad_image_volume, kko_check,
                                level_set_fixed_point_check, moment_integral_identity,
                                needle_blowup, needle_body,
                                radial_moment_over_polar, rot_inv_inequality_check,
                                sup_product_check_1sym, sup_product_polygon)
from santalo_lab.potentials import canonical


def test_polar_square_cross():
    sq = Polytope.box(2)
    cp = sq.polar()
    assert sorted(map(tuple, np.round(cp.vertices, 12))) == \
        [(-1.0, -0.0), (-0.0, -1.0), (0.0, 1.0), (1.0, 0.0)]
    assert sq.volume() == 4.0 and cp.volume() == 2.0
    back = cp.polar()
    assert np.allclose(np.sort(back.vertices, axis=0), np.sort(sq.vertices, axis=0),
                       atol=1e-12)


def test_ball_selfpolar_and_volume():
    ball = Polytope.regular_ngon(720)
    assert abs(ball.volume() - np.pi) < 1e-4
    th = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    gap = np.abs(ball.polar().support(dirs) - ball.support(dirs)).max()
    assert gap < 1e-5


def test_random_hexagon_bipolar(rng):
    hexg = Polytope.random_symmetric_polygon(rng, 3)
    assert hexg.is_symmetric()
    bb = hexg.polar().polar()
    assert np.abs(np.sort(bb.vertices, axis=0) - np.sort(hexg.vertices, axis=0)).max() < 1e-10


def test_origin_not_interior():
    with pytest.raises((OriginNotInterior, ValueError)):
        Polytope.from_vertices([[1, 1], [2, 1], [1, 2]])


def test_polarity_reverses_inclusion(rng):
    K = Polytope.random_symmetric_polygon(rng, 4)
    L = Polytope(2, 1.5 * K.vertices)       # K subset L
    th = np.linspace(0, 2 * np.pi, 128, endpoint=False)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    assert np.all(L.polar().support(dirs) <= K.polar().support(dirs) + 1e-12)


def test_grad_image_volume_cases(rng):
    cp = Polytope.cross_polytope(2)
    v, e = grad_image_volume(canonical(2, 2, 2), cp)
    assert abs(v - 2.0) < 1e-10                       # det = 1: plain area
    ball = Polytope.regular_ngon(720)
    V4 = canonical(4, 2, 2)                           # radial weight
    ps = V4.p_star
    pref = (V4.dual().c * ps) ** 2 * (ps - 1.0)
    exact = pref * 2 * np.pi / (2 * ps - 2.0)
    v, e = grad_image_volume(V4, ball)
    assert abs(v - exact) < 1e-4 * exact
    V43 = canonical(4, 3, 2)                          # axis-singular weight
    sq = Polytope.box(2)
    oracle = 4 * si.dblquad(lambda y, x: V43.det_hess_dual(np.array([[x, y]]))[0],
                            0, 1, 0, 1)[0]
    v, e = grad_image_volume(V43, sq)
    assert abs(v - oracle) < 1e-6 * oracle


def test_kko_examples():
    V = canonical(2, 2, 2)
    ball = Polytope.regular_ngon(720)
    out = kko_check(ball, V, 2.0)
    assert abs(out["lhs"] - np.pi ** 2) < 1e-3 and abs(out["rhs"] - np.pi ** 2) < 1e-12
    sq = Polytope.box(2)
    out2 = kko_check(sq, V, 2.0)
    assert abs(out2["lhs"] - 8.0) < 1e-10
    assert abs(out2["margin"] - (np.pi ** 2 - 8.0)) < 1e-9
    # level-set equality collapses at every scaling of the level
    for (p, q) in [(3, 2), (4, 3)]:
        Vx = canonical(p, q, 2)
        for alpha in (0.5, 1.0 / p, 2.0):
            th = 2 * np.pi * (np.arange(720) + 0.3) / 720
            u = np.stack([np.cos(th), np.sin(th)], axis=1)
            r = (alpha / Vx.c) ** (1.0 / p) / Vx.norm_q(u)
            Kl = Polytope(2, r[:, None] * u)
            res = kko_check(Kl, Vx, p)
            assert abs(res["margin"]) < 3e-3 * res["rhs"]
    # small p with a needle body: violated
    p = 1.2
    Vn = canonical(p, p, 2)
    Kn = needle_body(4.0, k=360).polar()
    out3 = kko_check(Kn, Vn, p)
    assert out3["classification"] == "violated"


def test_ratio_constant_anchor_and_invariance(rng):
    assert np.isclose(bs_bodies_ratio_constant(1, 2.0), np.pi / 2)
    assert np.isclose(bs_bodies_ratio_constant(2, 2.0), 4.0)
    K1 = Polytope.from_vertices([[1.7]], symmetrize=True)
    out = bs_equals_bodies_check(K1, canonical(2, 2, 1), 2.0)
    assert abs(out["rel_gap"]) < 1e-3
    ratios = []
    for _ in range(3):
        K = Polytope.random_symmetric_polygon(rng, 4)
        out = bs_equals_bodies_check(K, canonical(2, 2, 2), 2.0)
        assert abs(out["rel_gap"]) < 3e-3
        ratios.append(out["ratio"])
    assert (max(ratios) - min(ratios)) / min(ratios) < 5e-3


def test_level_set_fixed_point():
    assert level_set_fixed_point_check(canonical(2, 2, 2), 2.0) < 1e-5
    assert level_set_fixed_point_check(canonical(4, 2, 2), 4.0) < 1e-3
    assert level_set_fixed_point_check(canonical(3, 3, 2), 3.0) < 1e-2


def test_needle_blowup():
    rows = needle_blowup([0.0, 10.0, 100.0])
    assert abs(rows[0]["lhs"] - np.pi / 2) < 2e-3
    assert np.isfinite(rows[1]["lhs"])
    assert rows[2]["lhs"] / rows[1]["lhs"] >= 5.0


def test_sup_product_cases():
    sq = Polytope.box(2)
    out = sup_product_check_1sym(sq)
    assert np.isclose(out["lhs"], 1.0) and out["holds"]   # 4 * (1/4) <= 2
    ball = Polytope.regular_ngon(720, phase=0.19)
    out2 = sup_product_check_1sym(Polytope.regular_ngon(720))
    assert abs(out2["lhs"] - np.pi / 2) < 1e-3 and out2["holds"]
    b1 = Polytope.cross_polytope(2, radius=1.3)           # scaled B_1: equality
    out3 = sup_product_check_1sym(b1)
    assert abs(out3["margin"]) < 1e-9
    skew = Polytope.from_vertices([[2, 0], [0, 1]], symmetrize=True)
    with pytest.raises(NotOneSymmetric):
        sup_product_check_1sym(skew)


def test_moment_identity_and_rotinv(rng):
    ball = Polytope.regular_ngon(720)
    out = moment_integral_identity(ball, 1.5)
    assert abs(out["lhs"] - 2 * np.pi) < 1e-3           # closed radial value
    assert out["rel_gap"] < 1e-9
    out_q2 = moment_integral_identity(Polytope.box(2), 2.0 - 1e-12)
    assert abs(out_q2["lhs"] - Polytope.box(2).polar().volume()) < 1e-6
    hexg = Polytope.random_symmetric_polygon(rng, 3)
    assert moment_integral_identity(hexg, 1.7)["rel_gap"] < 1e-3
    r = rot_inv_inequality_check(ball, 1.5)
    assert r["holds"] and r["equality"]
    oc = Polytope.random_symmetric_polygon(rng, 4)
    r2 = rot_inv_inequality_check(oc, 1.5)
    assert r2["holds"]
    r3 = rot_inv_inequality_check(oc, 2.0)
    # q = 2 collapse: |K||K0| <= |B|^2
    assert abs((r3["rhs"] - r3["lhs"]) -
               (np.pi ** 2 - oc.volume() * oc.polar().volume())) < 1e-6


def test_gauge_and_support(rng):
    K = Polytope.random_symmetric_polygon(rng, 5)
    pts = rng.normal(size=(50, 2))
    g = K.gauge(pts)
    assert np.all(K.contains(pts / g[:, None] * 0.999))
    assert not np.any(K.contains(pts / g[:, None] * 1.01) & (g > 1e-9))


def test_polytope_3d():
    cube = Polytope.box(3)
    assert abs(cube.volume() - 8.0) < 1e-12
    oct_ = cube.polar()
    assert abs(oct_.volume() - 8.0 / 6.0) < 1e-12
    back = oct_.polar()
    assert abs(back.volume() - 8.0) < 1e-9
    V = canonical(2, 2, 3)
    v, e = grad_image_volume(V, oct_)
    assert abs(v - 8.0 / 6.0) < 2e-3
