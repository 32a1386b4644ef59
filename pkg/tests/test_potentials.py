import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab.potentials import (Hyperplane, NonConvexProfile,
                                    OnAxisSingularity, PowerNormPotential,
                                    canonical, concavity_condition_check,
                                    homogeneous_polar_det,
                                    monotone_det_condition_check,
                                    unit_ball_volume)

CASES = [(2, 2, 2), (4, 3, 2), (3, 2, 3), (1.5, 1.2, 2), (4, 4, 2)]


def _offaxis(rng, n, m=1000):
    return rng.uniform(0.2, 2.0, size=(m, n)) * rng.choice([-1, 1], size=(m, n))


@pytest.mark.parametrize("p,q,n", CASES)
def test_homogeneity_identities(p, q, n, rng):
    V = canonical(p, q, n)
    X = _offaxis(rng, n)
    g = V.grad(X)
    H = V.hess(X)
    scale = np.maximum(1.0, np.abs(p * V(X)))
    assert np.max(np.abs(np.sum(g * X, axis=1) - p * V(X)) / scale) < 1e-9
    W = V.dual()
    assert np.max(np.abs((p - 1) * V(X) - W(g)) / scale) < 1e-9
    assert np.max(np.abs((p - 1) * g - np.einsum("kij,kj->ki", H, X))) < 1e-9 * scale.max()
    e = np.zeros(n)
    e[0] = 1.0
    lhs = np.stack([V.third_derivative_action(x, e) for x in X])
    rhs = (p - 2) * np.einsum("kij,j->ki", H, e)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.abs(rhs).max())


def test_gaussian_grad_hess():
    V = PowerNormPotential(0.5, 2, 2, 2)
    x = np.array([[0.7, -1.2]])
    assert np.allclose(V.grad(x), x)
    assert np.allclose(V.hess(x)[0], np.eye(2))


def test_dual_examples():
    V = PowerNormPotential(0.5, 2, 2, 2)
    W = V.dual()
    assert (W.c, W.p, W.q) == (0.5, 2.0, 2.0)
    V4 = canonical(4, 2, 2)     # (1/4)|x|_2^4 -> (1/p*)|y|_2^{p*}, p* = 4/3
    W4 = V4.dual()
    assert np.isclose(W4.p, 4 / 3) and np.isclose(W4.q, 2.0) and np.isclose(W4.c, 0.75)
    for p, q, n in CASES:
        V = canonical(p, q, n)
        VV = V.dual().dual()
        assert np.isclose(VV.c, V.c, rtol=1e-12)
        assert np.isclose(VV.p, V.p, rtol=1e-12) and np.isclose(VV.q, V.q, rtol=1e-12)


def test_det_hess_dual(rng):
    V = PowerNormPotential(0.5, 2, 2, 2)
    x = _offaxis(rng, 2, 10)
    assert np.allclose(V.det_hess_dual(x), 1.0)
    # unit sphere radial case: det = p* - 1 = 1/(p-1)
    for p in (3.0, 4.0):
        Vp = canonical(p, 2, 2)
        u = np.array([[np.cos(0.3), np.sin(0.3)]])
        assert np.isclose(Vp.det_hess_dual(u)[0], 1.0 / (p - 1.0), rtol=1e-12)
    for p, q, n in CASES:
        Vx = canonical(p, q, n)
        W = Vx.dual()
        pts = _offaxis(rng, n, 50)
        num = np.array([np.linalg.det(W.hess(z)) for z in pts])
        assert np.max(np.abs(Vx.det_hess_dual(pts) - num) / np.abs(num)) < 1e-9


def test_inv_hess_quadform(rng):
    V = PowerNormPotential(0.5, 2, 2, 2)
    w = rng.normal(size=(20, 2))
    x = _offaxis(rng, 2, 20)
    assert np.allclose(V.inv_hess_quadform(x, w), np.sum(w * w, axis=1))
    for p, q, n in CASES:
        Vx = canonical(p, q, n)
        pts = _offaxis(rng, n, 1000)
        ws = rng.normal(size=(1000, n))
        dense = np.array([wv @ np.linalg.solve(Vx.hess(xv), wv)
                          for xv, wv in zip(pts, ws)])
        rel = np.abs(Vx.inv_hess_quadform(pts, ws) - dense) / np.abs(dense)
        assert rel.max() < 1e-10
        # w = grad V gives p V / (p-1), from (D^2 V)^{-1} grad V = x/(p-1)
        qf = Vx.inv_hess_quadform(pts, Vx.grad(pts))
        assert np.allclose(qf, Vx.p * Vx(pts) / (Vx.p - 1.0), rtol=1e-10)


def test_axis_singularity_raised():
    V = canonical(3, 1.5, 2)
    with pytest.raises(OnAxisSingularity):
        V.hess(np.array([[0.5, 0.0]]))
    V33 = canonical(3, 3, 2)          # q* = 1.5 < 2: dual weight axis-singular
    with pytest.raises(OnAxisSingularity):
        V33.det_hess_dual(np.array([[0.0, 1.0]]))


def test_concavity_condition(rng):
    samples = rng.uniform(0.2, 2.0, size=(60, 2))
    holds, _ = concavity_condition_check(canonical(3, 2, 2), samples)
    assert holds                       # q <= p
    fails, worst = concavity_condition_check(canonical(2, 4, 2), samples)
    assert not fails and worst > 0     # q > p fails at some sample
    # n = 1: equality structure, the margin is zero for any p
    s1 = rng.uniform(0.2, 2.0, size=(40, 1))
    holds1, worst1 = concavity_condition_check(canonical(2.7, 2.7, 1), s1)
    assert holds1 and abs(worst1) < 1e-9


def test_monotone_det_condition():
    ok, _ = monotone_det_condition_check(canonical(4, 3, 2))     # p >= q >= 2
    assert ok
    bad, _ = monotone_det_condition_check(canonical(3, 1.5, 2))  # q* - 2 > 0
    assert not bad
    ok2, _ = monotone_det_condition_check(canonical(3, 2, 2))    # radial, p >= 2
    assert ok2


def test_homogeneous_polar_det():
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    one = lambda t: np.ones_like(t)
    zero = lambda t: np.zeros_like(t)
    assert np.allclose(homogeneous_polar_det(2.0, one, zero, 1.0, th), 4.0)
    # alpha=3 at r=2: matches the Hessian determinant of |x|^3
    val = homogeneous_polar_det(3.0, one, zero, 2.0, th)
    assert np.allclose(val, 72.0)
    # elliptical profile from a quadratic form: det D^2 <Ax,x> = 4 det A
    A = np.array([[1.3, 0.4], [0.4, 0.8]])

    def phi(t):
        u = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return np.sqrt(np.einsum("...i,ij,...j->...", u, A, u))

    tfine = th
    h = 1e-5
    phidd = lambda t: (phi(t + h) - 2 * phi(t) + phi(t - h)) / h ** 2
    val = homogeneous_polar_det(2.0, phi, phidd, 1.0, tfine)
    assert np.allclose(val, 4 * np.linalg.det(A), rtol=1e-4)
    with pytest.raises(NonConvexProfile):
        homogeneous_polar_det(2.0, lambda t: 1 + 0.9 * np.cos(2 * t),
                              lambda t: -3.6 * np.cos(2 * t), 1.0, th)


def test_unit_ball_volume():
    assert np.isclose(unit_ball_volume(2, 2), np.pi)
    assert np.isclose(unit_ball_volume(1, 2), 2.0)
    assert np.isclose(unit_ball_volume(np.inf if False else 1, 3), 8 / 6)


def test_level_set_and_mass():
    V = canonical(2, 2, 2)   # |x|^2/2: {V <= 1/2} = unit disc
    assert np.isclose(V.level_set_volume(0.5), np.pi)
    assert np.isclose(V.lebesgue_mass(), 2 * np.pi)


def test_hyperplane():
    H = Hyperplane.coordinate(1)
    assert H.is_coordinate and np.allclose(H.unit_normal(3), [0, 1, 0])
    Ha = Hyperplane.from_angle(0.35)
    assert not Ha.is_coordinate
    assert np.isclose(np.linalg.norm(Ha.unit_normal(2)), 1.0)


@given(st.floats(1.1, 4.0), st.floats(1.1, 4.0), st.floats(0.2, 3.0))
@settings(max_examples=30, deadline=None)
def test_scaling_homogeneity(p, q, t):
    V = canonical(p, q, 2)
    x = np.array([[0.7, -0.4]])
    assert np.isclose(V(t * x)[0], t ** p * V(x)[0], rtol=1e-10)
