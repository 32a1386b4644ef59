"""Closed-form library for power-norm potentials V = c |x|_q^p.

Everything here is analytic: gradient, Hessian, the dual potential, the
determinant of the dual Hessian, and the inverse-Hessian quadratic form via a
Sherman-Morrison split of the diagonal-plus-rank-one Hessian.  The dual
exponents are p* = p/(p-1) and q* = q/(q-1); internally potentials are
treated as (cp) times the canonical scale 1/p, so the constant in the strong
Brascamp-Lieb inequality is unaffected by c.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .numgrid import Density


class OnAxisSingularity(Exception):
    """Hessian-level quantity requested on a coordinate hyperplane with q < 2."""


class NonConvexProfile(Exception):
    """Angle profile with phi + phi'' <= 0 somewhere (not a convex function)."""


_AXIS_EPS = 1e-12


def _check_off_axis(x: np.ndarray, needed: bool):
    if needed and np.any(np.abs(x) < _AXIS_EPS):
        raise OnAxisSingularity("point lies on a coordinate hyperplane")


@dataclass(frozen=True)
class PowerNormPotential:
    """V(x) = c * |x|_q^p on R^n, with c > 0, p > 1, q >= 1."""

    c: float
    p: float
    q: float
    n: int

    def __post_init__(self):
        if not (self.c > 0 and self.p > 1 and self.q >= 1 and self.n >= 1):
            raise ValueError("need c > 0, p > 1, q >= 1, n >= 1")

    @property
    def p_star(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_star(self) -> float:
        return self.q / (self.q - 1.0)

    # -- pointwise evaluation ------------------------------------------------

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.sum(np.abs(x) ** self.q, axis=-1)
        return self.c * s ** (self.p / self.q)

    def norm_q(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum(np.abs(x) ** self.q, axis=-1) ** (1.0 / self.q)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _check_off_axis(x, self.q < 1)  # gradient exists on axes for q >= 1, p > 1
        s = np.sum(np.abs(x) ** self.q, axis=-1, keepdims=True)
        a = np.sign(x) * np.abs(x) ** (self.q - 1.0)
        out = self.c * self.p * s ** (self.p / self.q - 1.0) * a
        return np.where(s > 0, out, 0.0)

    def hess(self, x: np.ndarray) -> np.ndarray:
        """Analytic Hessian; raises on coordinate hyperplanes when q < 2."""
        x = np.asarray(x, dtype=float)
        _check_off_axis(x, self.q < 2)
        s = np.sum(np.abs(x) ** self.q, axis=-1)[..., None, None]
        a = (np.sign(x) * np.abs(x) ** (self.q - 1.0))[..., :, None]
        diag = np.zeros(x.shape + (x.shape[-1],))
        di = np.arange(x.shape[-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            diag[..., di, di] = np.abs(x) ** (self.q - 2.0)
            rank1 = np.where(s > 0, (self.p - self.q) / np.where(s > 0, s, 1.0), 0.0) \
                * (a @ np.swapaxes(a, -1, -2))
            pref = s[..., 0, 0][..., None, None] ** (self.p / self.q - 1.0)
        return self.c * self.p * pref * (rank1 + (self.q - 1.0) * diag)

    # -- duality -------------------------------------------------------------

    def dual(self) -> "PowerNormPotential":
        """V* = c* |y|_{q*}^{p*}, scale matched so that dual(dual(V)) = V."""
        if not (self.p > 1 and self.q > 1):
            raise ValueError("dual potential needs p, q > 1")
        c_star = (self.c * self.p) ** (-1.0 / (self.p - 1.0)) / self.p_star
        return PowerNormPotential(c_star, self.p_star, self.q_star, self.n)

    def det_hess_dual(self, x: np.ndarray) -> np.ndarray:
        """det D^2 V*(x) in closed form (product of axis powers times a radial power)."""
        x = np.asarray(x, dtype=float)
        ps, qs = self.p_star, self.q_star
        _check_off_axis(x, qs < 2)
        cs = self.dual().c
        pref = (cs * ps) ** self.n * (ps - 1.0) * (qs - 1.0) ** (self.n - 1.0)
        r = np.sum(np.abs(x) ** qs, axis=-1) ** (1.0 / qs)
        with np.errstate(divide="ignore"):
            prod = np.prod(np.abs(x) ** (qs - 2.0), axis=-1)
        return pref * r ** (self.n * (ps - qs)) * prod

    def det_hess_dual_density(self) -> Density:
        """The det D^2 V* weight packaged for quadrature (tail metadata included)."""
        ps, qs = self.p_star, self.q_star
        cs = self.dual().c
        pref = (cs * ps) ** self.n * (ps - 1.0) * (qs - 1.0) ** (self.n - 1.0)
        if qs - 2.0 <= -1:
            raise ValueError("dual axis exponent <= -1; weight not integrable")
        if self.n == 1:
            # |z|_{q*}^{p*-q*} |z|^{q*-2} collapses to a single axis power
            return Density("det_hess_dual", 1, self.det_hess_dual,
                           axis_exponents=(ps - 2.0,), radial_exponent=0.0,
                           radial_norm=qs, const=pref, log_concave=False,
                           unconditional=True, axis_decreasing=(ps <= 2.0))
        return Density("det_hess_dual", self.n, self.det_hess_dual,
                       axis_exponents=(qs - 2.0,) * self.n,
                       radial_exponent=self.n * (ps - qs), radial_norm=qs,
                       const=pref, log_concave=False, unconditional=True,
                       axis_decreasing=(qs <= 2.0 and ps <= qs))

    def grad_log_det_hess_dual(self, x: np.ndarray) -> np.ndarray:
        """grad log det D^2 V*(x), used by the homogeneity-diagnostic operator."""
        x = np.asarray(x, dtype=float)
        _check_off_axis(x, True)
        ps, qs = self.p_star, self.q_star
        s = np.sum(np.abs(x) ** qs, axis=-1, keepdims=True)
        a = np.sign(x) * np.abs(x) ** (qs - 1.0)
        return self.n * (ps - qs) * a / s + (qs - 2.0) / x

    def inv_hess_quadform(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """<(D^2 V)^{-1} w, w> via Sherman-Morrison on the rank-one split.

        D^2 V = cp S^{p/q-1} [ (q-1) diag(|x_i|^{q-2}) + (p-q) a a^T / S ]
        with a_i = sign(x_i)|x_i|^{q-1}; the correction uses D^{-1}a = x/(q-1).
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        _check_off_axis(x, True)
        p, q = self.p, self.q
        S = np.sum(np.abs(x) ** q, axis=-1)
        dinv_ww = np.sum(w * w * np.abs(x) ** (2.0 - q), axis=-1) / (q - 1.0)
        xw = np.sum(x * w, axis=-1)
        quad = dinv_ww - (p - q) / ((p - 1.0) * (q - 1.0) * S) * xw ** 2
        return quad / (self.c * p * S ** (p / q - 1.0))

    def third_derivative_action(self, x: np.ndarray, e: np.ndarray) -> np.ndarray:
        """(D^2 V)_e(x) . x as a vector, from the closed-form third derivative."""
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        _check_off_axis(x, True)
        p, q = self.p, self.q
        m = p / q - 1.0
        S = np.sum(np.abs(x) ** q, axis=-1, keepdims=True)
        a = np.sign(x) * np.abs(x) ** (q - 1.0)
        ax = np.sum(a * x, axis=-1, keepdims=True)        # = S
        ae = np.sum(a * e, axis=-1, keepdims=True)
        d2 = np.abs(x) ** (q - 2.0)
        d3 = np.sign(x) * np.abs(x) ** (q - 3.0)
        # sum_{j,k} V_ijk e_k x_j with V_ijk expanded termwise
        t1 = (p - q) * (p - 2.0 * q) * S ** (m - 1.0) / S * a * ae * ax
        t2 = (p - q) * (q - 1.0) * S ** (m - 1.0) * (d2 * e * ax + a * np.sum(d2 * x * e, axis=-1, keepdims=True))
        t3 = (q - 1.0) * (p - q) * S ** (m - 1.0) * ae * d2 * x
        t4 = (q - 1.0) * (q - 2.0) * S ** m * d3 * x * e
        return self.c * p * (t1 + t2 + t3 + t4)

    def lebesgue_mass(self) -> float:
        """int e^{-V} dx = |B_q^n| Gamma(n/p + 1) c^{-n/p} in closed form."""
        return unit_ball_volume(self.q, self.n) * special.gamma(self.n / self.p + 1.0) \
            * self.c ** (-self.n / self.p)

    def level_set_volume(self, level: float) -> float:
        """|{V <= level}| = (level/c)^{n/p} |B_q^n|."""
        return (level / self.c) ** (self.n / self.p) * unit_ball_volume(self.q, self.n)

    def spec(self) -> dict:
        return {"c": self.c, "p": self.p, "q": self.q, "n": self.n}


def unit_ball_volume(q: float, n: int) -> float:
    """|B_q^n| = 2^n Gamma(1 + 1/q)^n / Gamma(1 + n/q)."""
    return 2.0 ** n * special.gamma(1.0 + 1.0 / q) ** n / special.gamma(1.0 + n / q)


def canonical(p: float, q: float, n: int) -> PowerNormPotential:
    """The canonical scale c = 1/p, i.e. V = (1/p)|x|_q^p."""
    return PowerNormPotential(1.0 / p, p, q, n)


@dataclass(frozen=True)
class Hyperplane:
    """Hyperplane through the origin, by coordinate axis or unit normal (n = 2)."""

    axis: int = -1
    normal: tuple = ()

    @staticmethod
    def coordinate(i: int) -> "Hyperplane":
        return Hyperplane(axis=i)

    @staticmethod
    def from_angle(theta: float) -> "Hyperplane":
        # normal e = (cos t, sin t); the hyperplane is e-perp
        return Hyperplane(axis=-1, normal=(float(np.cos(theta)), float(np.sin(theta))))

    @property
    def is_coordinate(self) -> bool:
        return self.axis >= 0

    def unit_normal(self, n: int) -> np.ndarray:
        if self.is_coordinate:
            e = np.zeros(n)
            e[self.axis] = 1.0
            return e
        e = np.asarray(self.normal, dtype=float)
        return e / np.linalg.norm(e)


# ---------------------------------------------------------------------------
# hypothesis checkers for the sufficient conditions of the main inequality
# ---------------------------------------------------------------------------

def concavity_condition_check(V: PowerNormPotential, samples: np.ndarray, tol: float = 1e-9):
    """Check D^2 V(x) <= (p-1) diag(V_{x_i}(x)/x_i) on positive-orthant samples.

    Cross-checks midpoint concavity of x -> V(x^{1/p}).  Returns
    (holds, worst eigenvalue margin) where negative margins mean the
    condition holds strictly.
    """
    samples = np.atleast_2d(samples)
    if np.any(samples <= 0):
        raise ValueError("samples must lie in the open positive orthant")
    worst = -np.inf
    for x in samples:
        H = V.hess(x)
        g = V.grad(x)
        D = np.diag(g / x)
        ev = np.linalg.eigvalsh(H - (V.p - 1.0) * D)
        worst = max(worst, float(ev.max()))
    holds = worst <= tol * max(1.0, abs(worst))

    # midpoint concavity of V(x^{1/p}) on random pairs from the sample cloud
    rng = np.random.default_rng(7)
    mid_worst = -np.inf
    for _ in range(200):
        i, j = rng.integers(0, len(samples), 2)
        a, b = samples[i], samples[j]
        lhs = V(((a + b) / 2.0) ** (1.0 / V.p))
        rhs = 0.5 * (V(a ** (1.0 / V.p)) + V(b ** (1.0 / V.p)))
        mid_worst = max(mid_worst, float(rhs - lhs))
    mid_holds = mid_worst <= 1e-9 * max(1.0, abs(mid_worst))
    return holds and mid_holds, worst


def monotone_det_condition_check(V: PowerNormPotential, t_points: int = 40,
                                 offsets: int = 12, seed: int = 11, tol: float = 1e-9):
    """For each coordinate normal e, check t -> det D^2 V*(x' + t e) non-increasing.

    Returns (holds, worst (axis, x', t) description).
    """
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.05, 3.0, t_points)
    worst = (True, None)
    worst_jump = 0.0
    for axis in range(V.n):
        for _ in range(offsets):
            xp = rng.uniform(0.1, 2.0, size=V.n)
            xp[axis] = 0.0
            pts = np.tile(xp, (t_points, 1))
            pts[:, axis] = ts
            vals = V.det_hess_dual(pts)
            jumps = np.diff(vals)
            scale = max(np.abs(vals).max(), 1e-300)
            j = float(jumps.max()) / scale
            if j > worst_jump:
                worst_jump = j
                worst = (j <= tol, (axis, xp.copy(), float(ts[int(np.argmax(jumps))])))
    return worst_jump <= tol, worst[1]


def homogeneous_polar_det(alpha: float, phi, phi_dd, r, theta) -> np.ndarray:
    """det D^2 Phi for Phi = r^alpha phi(theta)^alpha in the plane.

    phi and phi_dd are callables of the angle (value and second derivative).
    """
    th = np.asarray(theta, dtype=float)
    f = np.asarray(phi(th), dtype=float)
    fdd = np.asarray(phi_dd(th), dtype=float)
    if np.any(f <= 0):
        raise NonConvexProfile("angle profile must be positive")
    curv = f + fdd
    if np.any(curv <= 0):
        raise NonConvexProfile("phi + phi'' <= 0: profile is not the gauge of a convex function")
    r = np.asarray(r, dtype=float)
    return (alpha - 1.0) * alpha ** 2 * r ** (2.0 * (alpha - 2.0)) * f ** (2.0 * alpha - 1.0) * curv
