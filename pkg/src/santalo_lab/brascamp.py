"""Strong Brascamp-Lieb verification for power-norm log-concave measures.

The change of variables x_i -> sign(y_i)|y_i|^{2/q} sends the measure with
potential (1/p)|x|_q^p to a product of a radial factor
gamma ~ e^{-r^{2p/q}/p} r^{2n/q-1} dr and the weighted sphere measure
m ~ prod |y_i|^{2/q-1} sigma.  Everything spectral happens on the sphere: the
drifted Laplacian L f = Delta_S f + (2/q-1) <omega, grad_S f>, its two
families of elementary even eigenfunctions, the even-function Poincare
constant C_m, and the counterexample construction for p = q < 2.

Variances and Dirichlet forms in x-space are Monte Carlo with batch-mean
error bars (deterministic seeds); sphere quantities use Gauss-Jacobi rules
that integrate the singular weight exactly, or Beta-function closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate as sci_integrate
from scipy.special import gammaln

from .angular import circle_product_weight_nodes, sine_power_integral
from .numgrid import GridFunction, sample_mu
from .potentials import PowerNormPotential


class GridTouchesAxis(Exception):
    pass


class NonpositiveWeight(Exception):
    pass


class SearchFailed(Exception):
    """Counterexample search did not exceed the required ratio."""


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereMeasure:
    """m ~ prod |y_i|^{2/q-1} sigma on S^{n-1}, normalized."""

    n: int
    q: float

    @property
    def exponent(self) -> float:
        return 2.0 / self.q - 1.0

    def quad_nodes(self, n_quad: int = 64):
        """(theta, weights) with sum w F(theta) = E_m[F] (n = 2 only)."""
        if self.n != 2:
            raise NotImplementedError("quadrature nodes exist for n = 2")
        th, w = circle_product_weight_nodes(self.exponent, n_quad)
        return th, w / w.sum()

    def sample(self, count: int, seed: int) -> np.ndarray:
        """Unit vectors distributed as m (any n), via the gamma trick."""
        rng = np.random.default_rng(seed)
        a = self.exponent
        u = rng.gamma((a + 1.0) / 2.0, size=(count, self.n))
        z = np.sqrt(2.0 * u) * (rng.integers(0, 2, size=(count, self.n)) * 2 - 1)
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def average(self, F: Callable, n_quad: int = 96) -> float:
        th, w = self.quad_nodes(n_quad)
        return float(np.sum(w * F(th)))


@dataclass(frozen=True)
class RadialMeasure:
    """gamma ~ e^{-r^{2p/q}/p} r^{2n/q-1} dr on (0, inf), normalized."""

    n: int
    p: float
    q: float

    def moment(self, k: float) -> float:
        """E[r^k] = p^{kq/(2p)} Gamma(kq/(2p) + n/p) / Gamma(n/p)."""
        s = k * self.q / (2.0 * self.p)
        return float(self.p ** s * np.exp(gammaln(s + self.n / self.p)
                                          - gammaln(self.n / self.p)))

    def density(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        ln_norm = (self.q / (2 * self.p)) * 0.0
        # normalizer: int_0^inf e^{-r^{2p/q}/p} r^{2n/p... computed on demand
        val = np.exp(-r ** (2 * self.p / self.q) / self.p) * r ** (2 * self.n / self.q - 1.0)
        Z, _ = sci_integrate.quad(
            lambda t: np.exp(-t ** (2 * self.p / self.q) / self.p) * t ** (2 * self.n / self.q - 1.0),
            0, np.inf)
        return val / Z


def radial_moment_check(p: float, q: float, n: int) -> float:
    """|E_gamma[r^{2p/q}] - n| via independent 1-D quadrature."""
    a = 2.0 * p / q
    b = 2.0 * n / q - 1.0
    num, _ = sci_integrate.quad(lambda r: np.exp(-r ** a / p) * r ** (b + a), 0, np.inf)
    den, _ = sci_integrate.quad(lambda r: np.exp(-r ** a / p) * r ** b, 0, np.inf)
    return abs(num / den - n)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def lambda_bound(p: float, q: float, n: int) -> float:
    """max(1 - 1/p, 1 - 1/q, 1/(2(1 + (q-2)/n)))."""
    return max(1.0 - 1.0 / p, 1.0 - 1.0 / q, 1.0 / (2.0 * (1.0 + (q - 2.0) / n)))


def cm(q: float, n: int):
    """Best even-function Poincare constant of m: max of the two branches."""
    c1 = q / (4.0 * n)
    c2 = q * q / (8.0 * (q - 1.0) * (n + q - 2.0))
    return max(c1, c2), ("coordinate" if c1 >= c2 else "mixed")


# ---------------------------------------------------------------------------
# the spherical operator (n = 2 grids) and its eigenfunctions
# ---------------------------------------------------------------------------

@dataclass
class SphereGridFn:
    theta: np.ndarray
    values: np.ndarray


def sphere_grid(M: int = 2048) -> np.ndarray:
    """Uniform offset angle grid avoiding all multiples of pi/2."""
    return (np.arange(M) + 0.5) * (2.0 * np.pi / M)


def sphere_operator_apply(f: SphereGridFn, q: float) -> SphereGridFn:
    """L f = f'' + (2/q - 1) * 2 cot(2 theta) * f' by 4th-order periodic FD."""
    th = f.theta
    M = len(th)
    h = 2.0 * np.pi / M
    if np.min(np.abs(np.mod(th, np.pi / 2))) < 1e-9:
        raise GridTouchesAxis("angle grid touches a multiple of pi/2")
    v = f.values
    d1 = (np.roll(v, 2) - 8 * np.roll(v, 1) + 8 * np.roll(v, -1) - np.roll(v, -2)) / (12 * h)
    d2 = (-np.roll(v, 2) + 16 * np.roll(v, 1) - 30 * v + 16 * np.roll(v, -1)
          - np.roll(v, -2)) / (12 * h * h)
    drift = (2.0 / q - 1.0) * 2.0 / np.tan(2.0 * th)
    return SphereGridFn(th, d2 + drift * d1)


def eig_coordinate(q: float, n: int):
    """x_i^2 - 1/n with eigenvalue 4n/q (n = 2 closed forms in the angle)."""
    lam = 4.0 * n / q
    f = lambda th: 0.5 * np.cos(2 * th)
    d1 = lambda th: -np.sin(2 * th)
    d2 = lambda th: -2.0 * np.cos(2 * th)
    return f, d1, d2, lam


def eig_mixed(q: float, n: int):
    """|x_i x_j|^{2(1-1/q)} with eigenvalue 8(1-1/q)(1+(n-2)/q)."""
    beta = 2.0 * (1.0 - 1.0 / q)
    lam = 8.0 * (1.0 - 1.0 / q) * (1.0 + (n - 2.0) / q)
    c = 2.0 ** (-beta)

    def f(th):
        return c * np.abs(np.sin(2 * th)) ** beta

    def d1(th):
        s = np.sin(2 * th)
        return c * 2 * beta * np.cos(2 * th) * np.abs(s) ** (beta - 1.0) * np.sign(s)

    def d2(th):
        s = np.abs(np.sin(2 * th))
        return c * (-4 * beta * s ** beta
                    + 4 * beta * (beta - 1.0) * s ** (beta - 2.0) * np.cos(2 * th) ** 2)

    return f, d1, d2, lam


def eigen_residual_check(q: float, n: int, M: int = 2048, mc_budget: int = 16_000_000,
                         seed: int = 7):
    """Sup residual of L f + lambda f for both eigenfunction families.

    n = 2: closed-form derivatives on the offset angle grid (the two singular
    terms cancel algebraically; what remains is rounding).  n = 3: weak-form
    Monte Carlo residual |E|grad_S f|^2 - lambda Var_m f| / (lambda Var_m f).
    """
    if n == 2:
        th = sphere_grid(M)
        out = []
        for f, d1, d2, lam in (eig_coordinate(q, 2), eig_mixed(q, 2)):
            L = d2(th) + (2.0 / q - 1.0) * 2.0 / np.tan(2 * th) * d1(th)
            out.append(float(np.max(np.abs(L + lam * f(th)))))
        return {"coordinate": out[0], "mixed": out[1]}
    if n != 3:
        raise NotImplementedError("n must be 2 or 3")
    m = SphereMeasure(3, q)
    y = m.sample(mc_budget, seed)
    out = {}
    # coordinate family
    f = y[:, 0] ** 2 - 1.0 / 3.0
    grad2 = 4.0 * y[:, 0] ** 2 * (1.0 - y[:, 0] ** 2)
    lam = 4.0 * 3 / q
    var = f.var()
    out["coordinate"] = abs(grad2.mean() - lam * var) / (lam * var)
    # mixed family (signed variant: m-mean zero by parity)
    beta = 2.0 * (1.0 - 1.0 / q)
    g = np.abs(y[:, 0] * y[:, 1]) ** beta
    grad2 = beta ** 2 * g ** 2 * (1.0 / y[:, 0] ** 2 + 1.0 / y[:, 1] ** 2 - 4.0)
    lam = 8.0 * (1.0 - 1.0 / q) * (1.0 + 1.0 / q)
    var = (g ** 2).mean()
    out["mixed"] = abs(grad2.mean() - lam * var) / (lam * var)
    return out


def operator_symmetry_defect(q: float, M: int = 4096, n_quad: int = 256) -> float:
    """|int (Lf) g dm - int (Lg) f dm| for two angle bumps away from the axes."""
    th = sphere_grid(M)

    def bump(c, w):
        def fn(t):
            u = (np.mod(t - c + np.pi, 2 * np.pi) - np.pi) / w
            out = np.where(np.abs(u) < 1, np.exp(-1.0 / np.maximum(1 - u ** 2, 1e-300)), 0.0)
            return out
        return fn

    f = SphereGridFn(th, bump(0.8, 0.55)(th))
    g = SphereGridFn(th, bump(1.1, 0.5)(th))
    Lf = sphere_operator_apply(f, q).values
    Lg = sphere_operator_apply(g, q).values
    dens = np.abs(np.cos(th) * np.sin(th)) ** (2.0 / q - 1.0)
    dens = dens / dens.sum()
    a = np.sum(Lf * g.values * dens)
    b = np.sum(Lg * f.values * dens)
    return float(abs(a - b))


# -- closed-form Rayleigh quotients on the circle ---------------------------

def _J(c: float) -> float:
    return sine_power_integral(c)


def rayleigh_mixed_analytic(q: float) -> float:
    """Var_m / Dirichlet of the signed mixed eigenfunction (Beta integrals, n=2).

    The Rayleigh maximizer is sign(x_1 x_2)|x_1 x_2|^{2(1-1/q)}: odd in each
    coordinate (hence m-mean zero by parity) and even overall, with the same
    derivative magnitudes as the unsigned eigenfunction.
    """
    a = 2.0 / q - 1.0
    beta = 2.0 * (1.0 - 1.0 / q)
    var = 2.0 ** (-2 * beta) * _J(a + 2 * beta) / _J(a)
    dirich = 4 * beta ** 2 * 2.0 ** (-2 * beta) * (_J(a + 2 * beta - 2) - _J(a + 2 * beta)) / _J(a)
    return float(var / dirich)


def rayleigh_coordinate_analytic(q: float) -> float:
    a = 2.0 / q - 1.0
    var = 0.25 * (1.0 - (a + 1.0) / (a + 2.0))
    dirich = (a + 1.0) / (a + 2.0)
    return float(var / dirich)


def rayleigh_quotient(omega: Callable, domega: Callable, q: float,
                      n_quad: int = 128) -> float:
    """Var_m(omega) / int |omega'|^2 dm for a smooth angle profile (n = 2)."""
    m = SphereMeasure(2, q)
    th, w = m.quad_nodes(n_quad)
    v = omega(th)
    dv = domega(th)
    var = float(np.sum(w * v * v) - np.sum(w * v) ** 2)
    dir_ = float(np.sum(w * dv * dv))
    return var / dir_


def random_trig_even(rng: np.random.Generator, modes: int = 4):
    ks = np.arange(1, modes + 1)
    a = rng.normal(size=modes)
    b = rng.normal(size=modes)

    def omega(th):
        th = np.asarray(th)
        return (a[None, :] * np.cos(2 * np.outer(th, ks))
                + b[None, :] * np.sin(2 * np.outer(th, ks))).sum(axis=-1)

    def domega(th):
        th = np.asarray(th)
        return (-2 * ks[None, :] * a[None, :] * np.sin(2 * np.outer(th, ks))
                + 2 * ks[None, :] * b[None, :] * np.cos(2 * np.outer(th, ks))).sum(axis=-1)

    return omega, domega


def poincare_rayleigh_search(q: float, n: int = 2, trials: int = 64, seed: int = 3):
    """Best Var/Dirichlet ratio over the trial family; compares against C_m.

    The two Corollary eigenfunctions enter with analytic quotients; random
    even trigonometric polynomials and local perturbations of the best one
    are evaluated by Jacobi quadrature.
    """
    if n != 2:
        raise NotImplementedError("the search runs on the circle")
    rng = np.random.default_rng(seed)
    results = [("coordinate eigenfunction", rayleigh_coordinate_analytic(q)),
               ("mixed eigenfunction", rayleigh_mixed_analytic(q))]
    for k in range(trials):
        om, dom = random_trig_even(rng)
        results.append((f"trig-{k}", rayleigh_quotient(om, dom, q)))
    best_name, best = max(results, key=lambda t: t[1])
    c, branch = cm(q, n)
    return {"best_ratio": float(best), "best_trial": best_name, "cm": c,
            "branch": branch, "attained_gap": abs(best - c),
            "exceeds": best > c + 1e-3}


# ---------------------------------------------------------------------------
# variances and Dirichlet forms in x-space (Monte Carlo, batch means)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvenTrial:
    """Closed-form even test function with gradient."""
    name: str
    f: Callable
    grad: Callable


def variance(trial_f: Callable, V: PowerNormPotential, budget: int = 10 ** 6,
             seed: int = 0, batches: int = 20, method: str = "mc"):
    """(Var_mu f, error) for mu ~ e^{-V}; MC batch means or grid quadrature."""
    if method == "grid":
        return _variance_grid(trial_f, V)
    S = sample_mu(V, budget, seed)
    vals = np.asarray(trial_f(S.points), dtype=float)
    vb = vals.reshape(batches, -1)
    m_b = vb.mean(axis=1)
    s_b = (vb ** 2).mean(axis=1)
    var_b = s_b - m_b ** 2
    var = float(vals.var())
    err = 3.0 * float(var_b.std(ddof=1) / np.sqrt(batches))
    return var, err


def _variance_grid(trial_f: Callable, V: PowerNormPotential, N: int = 256,
                   target: float = 38.0):
    from .numgrid import BoxGrid, suggest_half_width
    L = suggest_half_width(lambda p: V(p), V.n, target=target)
    g = BoxGrid.cube(V.n, L, N)
    pts = g.points()
    w = np.exp(-V(pts))
    w /= w.sum()
    v = np.asarray(trial_f(pts), dtype=float)
    mean = float(np.sum(w * v))
    var = float(np.sum(w * v * v) - mean ** 2)
    return var, 1e-3 * abs(var)


def dirichlet_form(trial_grad: Callable, V: PowerNormPotential, budget: int = 10 ** 6,
                   seed: int = 0, batches: int = 20):
    """(int <(D^2 V)^{-1} grad f, grad f> dmu, error) by Monte Carlo."""
    S = sample_mu(V, budget, seed)
    q = V.inv_hess_quadform(S.points, np.asarray(trial_grad(S.points), dtype=float))
    qb = q.reshape(batches, -1).mean(axis=1)
    return float(q.mean()), 3.0 * float(qb.std(ddof=1) / np.sqrt(batches))


def strong_bl_check(trial: EvenTrial, V: PowerNormPotential, lam: Optional[float] = None,
                    budget: int = 10 ** 6, seed: int = 0):
    """margin = lam * Dirichlet - Var with 3-sigma error bars."""
    if lam is None:
        lam = lambda_bound(V.p, V.q, V.n)
    S = sample_mu(V, budget, seed)
    vals = np.asarray(trial.f(S.points), dtype=float)
    quad = V.inv_hess_quadform(S.points, np.asarray(trial.grad(S.points), dtype=float))
    B = 20
    vb, qb = vals.reshape(B, -1), quad.reshape(B, -1)
    mean = vals.mean()
    margin_b = lam * qb.mean(axis=1) - ((vb - mean) ** 2).mean(axis=1)
    margin = float(lam * quad.mean() - vals.var())
    err = 3.0 * float(margin_b.std(ddof=1) / np.sqrt(B))
    return {"margin": margin, "err": err, "lambda": float(lam),
            "var": float(vals.var()), "dirichlet": float(quad.mean()),
            "holds": margin >= -err}


def sharpness_witness(V: PowerNormPotential, budget: int = 10 ** 6, seed: int = 0):
    """f = <grad V, x> = pV attains Var/Dirichlet = 1 - 1/p."""
    trial = EvenTrial("pV", lambda x: V.p * V(x), lambda x: V.p * V.grad(x))
    S = sample_mu(V, budget, seed)
    vals = trial.f(S.points)
    quad = V.inv_hess_quadform(S.points, trial.grad(S.points))
    ratio = float(vals.var() / quad.mean())
    return {"ratio": ratio, "target": 1.0 - 1.0 / V.p,
            "var": float(vals.var()), "np": V.n * V.p}


def random_even_polynomial(rng: np.random.Generator, n: int) -> EvenTrial:
    """Random even polynomial with closed-form gradient (degree <= 4)."""
    if n == 1:
        mons = [((2,),), ((4,),)]
    elif n == 2:
        mons = [((2, 0),), ((0, 2),), ((1, 1),), ((4, 0),), ((0, 4),),
                ((2, 2),), ((3, 1),), ((1, 3),)]
    else:
        mons = [((2, 0, 0),), ((0, 2, 0),), ((0, 0, 2),), ((1, 1, 0),),
                ((1, 0, 1),), ((0, 1, 1),), ((2, 2, 0),), ((4, 0, 0),)]
    exps = np.array([m[0] for m in mons], dtype=float)
    coef = rng.normal(size=len(mons))

    def f(x):
        x = np.atleast_2d(x)
        return np.sum(coef * np.prod(x[:, None, :] ** exps[None, :, :], axis=2), axis=1)

    def grad(x):
        x = np.atleast_2d(x)
        out = np.zeros_like(x)
        for i in range(x.shape[1]):
            e = exps.copy()
            mask = e[:, i] > 0
            if not mask.any():
                continue
            e2 = e[mask].copy()
            e2[:, i] -= 1.0
            out[:, i] = np.sum(coef[mask] * exps[mask, i]
                               * np.prod(x[:, None, :] ** e2[None, :, :], axis=2), axis=1)
        return out

    return EvenTrial("random-even-poly", f, grad)


# ---------------------------------------------------------------------------
# parity decomposition
# ---------------------------------------------------------------------------

def parity_decompose(f: GridFunction) -> dict:
    """f = sum_a f_a with f_a even/odd per coordinate (a in {0,1}^n)."""
    n = f.grid.n
    out = {}
    for code in range(2 ** n):
        a = tuple((code >> i) & 1 for i in range(n))
        acc = np.zeros_like(f.values)
        for flips in range(2 ** n):
            sgn = 1.0
            v = f.values
            for i in range(n):
                if (flips >> i) & 1:
                    sl = [slice(None)] * n
                    sl[i] = slice(None, None, -1)
                    v = v[tuple(sl)]
                    if a[i] == 1:
                        sgn = -sgn
            acc = acc + sgn * v
        out[a] = GridFunction(f.grid, acc / 2 ** n)
    return out


# ---------------------------------------------------------------------------
# 1-D Poincare-type inequality on the half line
# ---------------------------------------------------------------------------

def onedim_poincare_check(u: Callable, du: Callable, ddu: Callable, g_pairs,
                          r_max: float = 40.0):
    """Margins of Var_{e^{-u}dr}(g) <= int (g')^2/(u'' + u'/r) e^{-u} dr.

    g_pairs is a list of (g, g'); the weight u'' + u'/r must be positive.
    """
    probe = np.linspace(1e-3, r_max, 4096)
    wt = ddu(probe) + du(probe) / probe
    if np.any(wt <= 0):
        raise NonpositiveWeight("u'' + u'/r must be positive on (0, inf)")

    def q(fn):
        val, _ = sci_integrate.quad(
            lambda r: fn(max(r, 1e-12)) * np.exp(-u(max(r, 1e-12))), 0, r_max,
            limit=200, points=[1e-6, 1.0])
        return val

    Z = q(lambda r: 1.0)

    def rhs_integrand(dg):
        def fn(r):
            w = ddu(r) + du(r) / r
            # the singular parts of the weight cancel analytically; at tiny r
            # double precision loses them entirely, where the integrand is 0
            if not np.isfinite(w) or w <= 0:
                return 0.0
            return dg(r) ** 2 / w
        return fn

    margins = []
    for g, dg in g_pairs:
        mean = q(g) / Z
        var = q(lambda r: (g(r) - mean) ** 2) / Z
        rhs = q(rhs_integrand(dg)) / Z
        margins.append(rhs - var)
    return margins


def gamma_radial_potential(p: float, q: float, n: int):
    """The potential of the radial factor gamma, with derivatives."""
    a = 2.0 * p / q
    b = 2.0 * n / q - 1.0
    u = lambda r: r ** a / p - b * np.log(r)
    du = lambda r: (a / p) * r ** (a - 1.0) - b / r
    ddu = lambda r: (a * (a - 1.0) / p) * r ** (a - 2.0) + b / r ** 2
    return u, du, ddu


# ---------------------------------------------------------------------------
# counterexample search (p = q < 2 and the p = 2 probe)
# ---------------------------------------------------------------------------

def counterexample_ratio(p: float, q: float, n: int, s: float) -> float:
    """Var/Dirichlet of f(x) = |y|^s omega(theta(y)), y_i = sign(x_i)|x_i|^{q/2}.

    omega is the centered mixed eigenfunction; all factors reduce to radial
    moments of gamma and Beta integrals of m (n = 2).
    """
    if n != 2:
        raise NotImplementedError("the construction is evaluated on the circle")
    a = 2.0 / q - 1.0
    beta = 2.0 * (1.0 - 1.0 / q)
    A = 2.0 ** (-2 * beta) * _J(a + 2 * beta) / _J(a)
    D = 4 * beta ** 2 * 2.0 ** (-2 * beta) * (_J(a + 2 * beta - 2) - _J(a + 2 * beta)) / _J(a)
    mom_ratio = s * q + n - p          # E r^{2s} / E r^{2s - 2p/q}
    denom = (q * q / 4.0) * (s * s * A / (p - 1.0) + D / (q - 1.0))
    return float(mom_ratio * A / denom)


def counterexample_trial(p: float, q: float, n: int, s: float) -> EvenTrial:
    """The same test function expressed in x-coordinates (for MC validation).

    Uses the signed eigenfunction sign(y_1 y_2)|y_1 y_2|^beta, which is even
    overall and m-mean-zero by parity.
    """
    beta = 2.0 * (1.0 - 1.0 / q)

    def f(x):
        x = np.atleast_2d(x)
        S = np.sum(np.abs(x) ** q, axis=1)
        W = np.sign(x[:, 0] * x[:, 1]) * np.abs(x[:, 0] * x[:, 1]) ** (q * beta / 2.0)
        return S ** (s / 2.0 - beta) * W

    def grad(x):
        x = np.atleast_2d(x)
        S = np.sum(np.abs(x) ** q, axis=1, keepdims=True)
        W = (np.sign(x[:, 0] * x[:, 1])
             * np.abs(x[:, 0] * x[:, 1]) ** (q * beta / 2.0))[:, None]
        dS = q * np.sign(x) * np.abs(x) ** (q - 1.0)
        dW = (q * beta / 2.0) * W / x
        return (s / 2.0 - beta) * S ** (s / 2.0 - beta - 1.0) * dS * W             + S ** (s / 2.0 - beta) * dW

    return EvenTrial(f"radial-exponent-{s:.3g}-signed-mixed", f, grad)


def counterexample_search(p: float, q: float, n: int = 2,
                          s_grid: Optional[np.ndarray] = None,
                          require_violation: bool = False, slack: float = 0.02):
    """Sweep the radial exponent of the eigenfunction ansatz; best ratio wins.

    For p = q < 2 the best ratio must exceed 1 - 1/p + ``slack`` (raises
    SearchFailed when ``require_violation``); for other (p, q) the findings
    are reported as-is (the sharp-regime searches must NOT find violations).
    """
    if s_grid is None:
        s_grid = np.linspace(1.5, 3.0, 61)
    ratios = [counterexample_ratio(p, q, n, float(s)) for s in s_grid]
    k = int(np.argmax(ratios))
    best_s, best = float(s_grid[k]), float(ratios[k])
    threshold = 1.0 - 1.0 / p + slack
    found = best > threshold
    if require_violation and not found:
        raise SearchFailed(
            f"best ratio {best:.4f} at s={best_s} does not exceed {threshold:.4f}")
    return {"p": p, "q": q, "n": n, "best_s": best_s, "best_ratio": best,
            "lambda_target": 1.0 - 1.0 / p, "threshold": threshold,
            "violation_found": bool(found),
            "trial": counterexample_trial(p, q, n, best_s)}
