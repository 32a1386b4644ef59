"""Evaluation of the generalized Blaschke-Santalo functionals.

Two functionals are exposed: the weighted product
(int e^{-a Phi} rho1)^{1/a} (int e^{-b Phi*} rho2)^{1/b} and its power-norm
specialization int e^{-Phi} (int e^{-Phi*(grad V)/(p-1)})^{p-1}.  The latter
is evaluated by two independent routes, a composition on a y-grid and a
weighted z-integral against det D^2 V*, which must agree within combined
error bars.  Every report carries per-factor error estimates and the sign of
the discrete-conjugate bias.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy import integrate as sci_integrate

from . import numgrid
from .legendre import ConjugatePair, conjugate
from .numgrid import (BoxGrid, Density, DegenerateCovariance, GridFunction,
                      build_grid_fn, check_coercive, covariance, integrate_exp,
                      interpolate, suggest_half_width, unit_density)
from .potentials import PowerNormPotential, unit_ball_volume


class RouteMismatch(Exception):
    """Direct and weighted evaluations of the dual factor disagree."""


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class BSParams:
    alpha: float
    beta: float
    rho1: Density
    rho2: Density

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha, beta must be positive")


def classical_params(n: int) -> BSParams:
    return BSParams(1.0, 1.0, unit_density(n), unit_density(n))


@dataclass
class BSReport:
    value: float
    factor1: float
    err1: float
    factor2: float
    err2: float
    value_err: float
    bias_note: str = "discrete conjugate underestimates Phi*, biasing the dual factor upward"

    def to_dict(self) -> dict:
        return {
            "value": self.value, "value_err": self.value_err,
            "factor1": self.factor1, "err1": self.err1,
            "factor2": self.factor2, "err2": self.err2,
            "bias_note": self.bias_note,
        }


@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray
    shift: float


def validate_member(phi: GridFunction) -> None:
    """Check membership in the admissible class: even, convex, coercive, nonempty."""
    if phi.even is None:
        phi.even, _ = numgrid.check_even(phi)
    if phi.convex_certified is None:
        phi.convex_certified, _ = numgrid.check_convex(phi)
    problems = []
    if not phi.finite_mask.any():
        problems.append("empty domain")
    if not phi.even:
        problems.append("not even")
    if not phi.convex_certified:
        problems.append("not convex-certified")
    if problems:
        raise ValidationError(", ".join(problems))
    check_coercive(phi)  # raises NotCoercive


def conjugate_bias_bound(phi: GridFunction, mass_band: float = 16.0) -> float:
    """Bound on sup (Phi* - Phi*_discrete) over the region that carries mass.

    The node-sup misses the true sup by at most h^2/8 times the curvature
    along the active axis; second differences of Phi on the sublevel band
    {Phi <= min + mass_band} estimate exactly that.
    """
    v = phi.values
    lo = phi.min_value()
    band = np.isfinite(v) & (v <= lo + mass_band)
    worst = 0.0
    for i in range(v.ndim):
        sl_c = [slice(None)] * v.ndim
        sl_p = [slice(None)] * v.ndim
        sl_m = [slice(None)] * v.ndim
        sl_c[i], sl_p[i], sl_m[i] = slice(1, -1), slice(2, None), slice(0, -2)
        ok = band[tuple(sl_c)] & np.isfinite(v[tuple(sl_p)]) & np.isfinite(v[tuple(sl_m)])
        if not ok.any():
            continue
        d2 = (v[tuple(sl_p)] - 2 * v[tuple(sl_c)] + v[tuple(sl_m)])[ok]
        worst = max(worst, float(np.abs(d2).max()))
    return worst / 8.0


def dual_overshoot_mass(pair: ConjugatePair, rho: Density, beta: float) -> float:
    """Dual-factor mass on nodes beyond the certified slope range.

    The auto dual box deliberately overshoots the maximal finite-difference
    slope by 10%; on that band the discrete conjugate continues linearly
    below the true (possibly infinite) conjugate, so its contribution is
    charged to the error bar.
    """
    from .legendre import _max_axis_slope
    g = pair.dual_grid
    pts = g.points().reshape(g.shape + (g.n,))
    mask = np.zeros(g.shape, dtype=bool)
    for i in range(g.n):
        S = _max_axis_slope(pair.primal, i)
        mask |= np.abs(pts[..., i]) > S
    if not mask.any():
        return 0.0
    singular = any(k != 0.0 for k in rho.axis_exponents)
    w = rho.smooth_part(pts) if singular else rho(pts)
    v = pair.dual.values
    with np.errstate(over="ignore"):
        G = np.where(np.isfinite(v), np.exp(-beta * np.minimum(v, 700.0)) * w, 0.0)
    if singular:
        aw = rho.axis_cell_weights(g)
        qw = aw[0]
        for wi in aw[1:]:
            qw = np.multiply.outer(qw, wi)
    else:
        qw = g.quad_weights()
    return float(np.sum(G * qw * mask))


def mass_sized_pair(phi: GridFunction, beta: float, budget: float = 40.0) -> ConjugatePair:
    """Conjugate of phi on a dual box trimmed to where e^{-beta Phi*} has mass.

    The slope-sized auto box represents all of Phi* but can be far wider than
    the support of the dual measure (steep corners of the primal box).  For
    even phi, Phi*(z) >= |x_i||z_i| - phi(x) for every node, so the live band
    {Phi* <= min + budget/beta} is bounded per axis in closed form.  Values
    are still exact node-sups, and the coercivity tail bound accounts for the
    trimmed-away region.
    """
    from .legendre import auto_dual_grid
    auto = auto_dual_grid(phi)
    cap = -phi.min_value() + budget / beta   # Phi*(0) >= -min phi
    # probe at half resolution to find the live band {Phi* <= cap} per axis
    probe_grid = BoxGrid(phi.grid.n, auto.half_widths,
                         tuple(max(N // 2, 16) for N in auto.resolutions),
                         auto.midpoint_offset)
    probe = conjugate(phi, dual_grid=probe_grid)
    v = probe.dual.values
    tight = []
    for i in range(phi.grid.n):
        other = tuple(j for j in range(phi.grid.n) if j != i)
        line_min = v.min(axis=other) if other else v
        ax = probe_grid.axis(i)
        live = np.abs(ax[line_min <= cap])
        t = float(live.max()) if live.size else auto.half_widths[i] / 4.0
        tight.append(max(min(1.1 * t + 2.0 * probe_grid.spacing(i),
                             auto.half_widths[i]), 1e-6))
    res = tuple(4 * N for N in auto.resolutions) if phi.grid.n == 1 else auto.resolutions
    grid = BoxGrid(phi.grid.n, tuple(tight), res, auto.midpoint_offset)
    return conjugate(phi, dual_grid=grid)


def bs_general(phi: GridFunction, params: BSParams,
               pair: Optional[ConjugatePair] = None, validate: bool = True) -> BSReport:
    """(int e^{-a Phi} rho1)^{1/a} (int e^{-b Phi*} rho2)^{1/b} with error bars.

    ``validate=False`` skips class membership (used for numerical symmetrals
    whose convexity certificate holds only up to rearrangement tolerance).
    """
    if validate:
        validate_member(phi)
    if pair is None:
        pair = mass_sized_pair(phi, params.beta)
    f1, e1 = integrate_exp(phi, params.rho1, params.alpha)
    f2, e2 = integrate_exp(pair.dual, params.rho2, params.beta)
    e2 = e2 + f2 * np.expm1(params.beta * conjugate_bias_bound(phi))
    e2 = e2 + dual_overshoot_mass(pair, params.rho2, params.beta)
    value = f1 ** (1.0 / params.alpha) * f2 ** (1.0 / params.beta)
    rel = e1 / (params.alpha * f1) + e2 / (params.beta * f2)
    return BSReport(value, f1, e1, f2, e2, value * rel)


# ---------------------------------------------------------------------------
# the power-norm functional, two routes
# ---------------------------------------------------------------------------

def dual_values_hybrid(pair: ConjugatePair, Z: np.ndarray) -> np.ndarray:
    """Phi*_d at arbitrary points: windowed node-sup, locally sharpened with
    the primal evaluator when one is attached (bilinear fallback otherwise).

    The evaluation never exceeds the true conjugate, so downstream dual
    factors inherit the documented upward bias direction.
    """
    from .legendre import refined_sup_values
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if pair.support_x is None:
        return interpolate(pair.dual, Z)
    return refined_sup_values(pair, Z)


def dual_values_bracket(pair: ConjugatePair, Z: np.ndarray):
    """(value, upper bound) for Phi*_d off the grid.

    Multilinear interpolation of a convex grid function dominates it, so the
    bilinear read is a certified upper envelope; the gap to the windowed
    node-sup bounds the evaluation error pointwise.
    """
    val = dual_values_hybrid(pair, Z)
    ub = interpolate(pair.dual, np.atleast_2d(Z))
    bad = ~np.isfinite(ub)
    ub[bad] = val[bad]
    return val, np.maximum(ub, val)


def _dual_factor_weighted(pair: ConjugatePair, p: float, V: PowerNormPotential):
    if V.n == 1:
        return _dual_factor_weighted_radial1d(pair, p, V)
    if V.n == 2:
        return _dual_factor_weighted_polar2d(pair, p, V)
    rho = V.det_hess_dual_density()
    val, err = integrate_exp(pair.dual, rho, 1.0 / (p - 1.0))
    return val, err


def _radial1d_pass(pair: ConjugatePair, p: float, V: PowerNormPotential,
                   n_rad: int, want_bracket: bool = True):
    from .angular import radial_power_nodes
    ps = V.p_star
    pref = (V.dual().c * ps) * (ps - 1.0)
    L = pair.dual_grid.half_widths[0] * (1.0 - 1e-12)
    s, ws = radial_power_nodes(ps - 2.0, n_rad)
    z = np.concatenate([(L * s), -(L * s)])[:, None]
    if want_bracket:
        gs = dual_values_bracket(pair, z)
    else:
        gs = (dual_values_hybrid(pair, z),)
    outs = []
    for g in gs:
        with np.errstate(over="ignore"):
            E = np.exp(-np.minimum(g, 700.0) / (p - 1.0))
        outs.append(float(pref * L ** (ps - 1.0) *
                          np.sum(ws * (E[:n_rad] + E[n_rad:]))))
    return (outs[0], outs[1]) if want_bracket else (outs[0], None)


def _dual_factor_weighted_radial1d(pair: ConjugatePair, p: float, V: PowerNormPotential,
                                   n_rad: int = 192):
    coarse, _ = _radial1d_pass(pair, p, V, n_rad // 2, want_bracket=False)
    fine, low = _radial1d_pass(pair, p, V, n_rad)
    rho = V.det_hess_dual_density()
    tail = numgrid.best_tail_bound(pair.dual, 1.0 / (p - 1.0), rho)
    return fine, abs(fine - coarse) + tail + (fine - low)


def _polar2d_pass(pair: ConjugatePair, p: float, V: PowerNormPotential,
                  n_ang: int, n_rad: int, want_bracket: bool = True):
    """int_box e^{-Phi*(z)/(p-1)} det D^2 V*(z) dz in polar coordinates.

    All power singularities (axes for q* < 2, origin for p* < 2) are absorbed
    into Gauss-Jacobi weights.  Returns (value, lower value from the bilinear
    upper envelope of Phi*): their gap bounds the evaluation error.
    """
    from .angular import circle_product_weight_nodes, radial_power_nodes
    ps, qs = V.p_star, V.q_star
    pref = (V.dual().c * ps) ** 2 * (ps - 1.0) * (qs - 1.0)
    th, wth = circle_product_weight_nodes(qs - 2.0, n_ang)
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    ang = pref * np.sum(np.abs(u) ** qs, axis=1) ** (2.0 * (ps - qs) / qs)
    Lx, Ly = pair.dual_grid.half_widths
    R = np.minimum(Lx / np.maximum(np.abs(u[:, 0]), 1e-300),
                   Ly / np.maximum(np.abs(u[:, 1]), 1e-300)) * (1.0 - 1e-12)
    m = 2.0 * ps - 3.0
    s, ws = radial_power_nodes(m, n_rad)
    z = (R[:, None] * s[None, :])[:, :, None] * u[:, None, :]
    if want_bracket:
        gval, gub = dual_values_bracket(pair, z.reshape(-1, 2))
        gs = (gval, gub)
    else:
        gs = (dual_values_hybrid(pair, z.reshape(-1, 2)),)
    outs = []
    for g in gs:
        with np.errstate(over="ignore"):
            E = np.where(np.isfinite(g), np.exp(-np.minimum(g, 700.0) / (p - 1.0)),
                         0.0).reshape(len(th), n_rad)
        radial = R ** (m + 1.0) * (E * ws[None, :]).sum(axis=1)
        outs.append(float(np.sum(wth * ang * radial)))
    return (outs[0], outs[1]) if want_bracket else (outs[0], None)


def _dual_factor_weighted_polar2d(pair: ConjugatePair, p: float, V: PowerNormPotential,
                                  n_ang: int = 96, n_rad: int = 96):
    coarse, _ = _polar2d_pass(pair, p, V, n_ang // 2, n_rad // 2, want_bracket=False)
    fine, low = _polar2d_pass(pair, p, V, n_ang, n_rad)
    rho = V.det_hess_dual_density()
    tail = numgrid.best_tail_bound(pair.dual, 1.0 / (p - 1.0), rho)
    return fine, abs(fine - coarse) + tail + (fine - low)


def _y_halfwidth(V: PowerNormPotential, z_cap: float) -> float:
    """Radius at which |grad V| reaches z_cap in the slowest direction."""
    if V.n == 1:
        dirs = np.array([[1.0]])
    else:
        th = np.linspace(0, np.pi, 37)[1:-1]
        if V.n == 2:
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        else:
            rng = np.random.default_rng(5)
            dirs = rng.normal(size=(64, V.n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = dirs[np.min(np.abs(dirs), axis=1) > 1e-3]
    gnorm = np.linalg.norm(V.grad(dirs), axis=1)
    return float(np.max((z_cap / gnorm) ** (1.0 / (V.p - 1.0))))


def _dual_factor_direct(pair: ConjugatePair, p: float, V: PowerNormPotential,
                        resolution: int = 128):
    """int e^{-Phi*(grad V(y))/(p-1)} dy on an auto-sized midpoint y-grid."""
    a_star, b_star = check_coercive(pair.dual)
    z_cap = (34.0 * (p - 1.0) - b_star + abs(b_star)) / a_star + 1.0
    z_cap = min(z_cap, 0.98 * min(pair.dual_grid.half_widths))
    yL = _y_halfwidth(V, z_cap)
    n = V.n
    N = min(resolution, pair.dual_grid.resolutions[0])
    ygrid = BoxGrid.cube(n, yL, N)
    ypts = ygrid.points()
    z = V.grad(ypts)
    g = dual_values_hybrid(pair, z) / (p - 1.0)
    g[np.any(np.abs(z) > np.asarray(pair.dual_grid.half_widths), axis=1)] = numgrid.INF
    with np.errstate(over="ignore"):
        G = np.where(np.isfinite(g), np.exp(-np.minimum(g, 700.0)), 0.0)
    val = float(G.sum() * ygrid.cell_volume)
    disc = numgrid._second_difference_l1(G.reshape(ygrid.shape) * ygrid.cell_volume) / 24.0
    # tail: g(y) >= (a* c_min |y|^{p-1} + b*)/(p-1) outside the y-box
    dirs_norm = np.linalg.norm(V.grad(np.eye(n))) if n == 1 else None
    gmin = _min_grad_norm(V)
    kappa = a_star * gmin / (p - 1.0)
    pw = p - 1.0
    s = n / pw
    tail = (n * unit_ball_volume(2.0, n) * np.exp(-b_star / (p - 1.0)) *
            special.gamma(s) * special.gammaincc(s, kappa * yL ** pw) / (pw * kappa ** s))
    return val, disc + tail


def _min_grad_norm(V: PowerNormPotential) -> float:
    if V.n == 1:
        return float(np.linalg.norm(V.grad(np.array([1.0]))))
    if V.n == 2:
        th = np.linspace(0, np.pi / 2, 91)[1:-1]
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        rng = np.random.default_rng(6)
        dirs = np.abs(rng.normal(size=(256, 3)))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return float(np.linalg.norm(V.grad(dirs), axis=1).min())


def bs_pv(phi: GridFunction, p: float, V: PowerNormPotential,
          cross_check: bool = True, validate: bool = True) -> BSReport:
    """int e^{-Phi} dx * (int e^{-Phi*(grad V(y))/(p-1)} dy)^{p-1}.

    The dual factor is computed on the z-side against det D^2 V* (primary)
    and re-computed by direct composition on a y-grid; disagreement beyond
    3x combined error raises RouteMismatch.
    """
    if V.n != phi.grid.n or abs(p - V.p) > 1e-12:
        raise ValidationError("potential degree/dimension must match the functional")
    if validate:
        validate_member(phi)
    pair = mass_sized_pair(phi, 1.0 / (p - 1.0))
    f1, e1 = integrate_exp(phi, unit_density(V.n), 1.0)
    f2, e2 = _dual_factor_weighted(pair, p, V)
    bias = f2 * np.expm1(conjugate_bias_bound(phi) / (p - 1.0))
    e2 = e2 + bias + dual_overshoot_mass(pair, V.det_hess_dual_density(), 1.0 / (p - 1.0))
    if cross_check:
        f2b, e2b = _dual_factor_direct(pair, p, V)
        if abs(f2 - f2b) > 3.0 * (e2 + e2b + 1e-12 * f2):
            raise RouteMismatch(
                f"weighted route {f2:.6g} +- {e2:.2g} vs direct route {f2b:.6g} +- {e2b:.2g}")
    value = f1 * f2 ** (p - 1.0)
    rel = e1 / f1 + (p - 1.0) * e2 / f2
    return BSReport(value, f1, e1, f2, e2, value * rel)


def scaling_invariance_check(phi: GridFunction, p: float, V: PowerNormPotential,
                             ts) -> float:
    """max_t |BS(Phi(t .)) - BS(Phi)| / BS(Phi); needs an evaluator-backed Phi."""
    if phi.evaluator is None:
        raise ValidationError("scaling check needs an evaluator")
    base = bs_pv(phi, p, V)
    worst = 0.0
    for t in ts:
        g = BoxGrid(phi.grid.n, tuple(L / t for L in phi.grid.half_widths),
                    phi.grid.resolutions)
        phit = build_grid_fn(lambda pts, t=t: phi.evaluator(t * pts), g)
        rep = bs_pv(phit, p, V)
        worst = max(worst, abs(rep.value - base.value) / base.value)
    return worst


def isotropic_normalize(phi: GridFunction, resolution: Optional[int] = None,
                        passes: int = 2):
    """Affine-normalize so e^{-Phi'} is an isotropic probability density.

    Returns (AffineMap, Phi') with Phi'(y) = Phi(S y) + b, S = covariance^{1/2}
    of the current measure, iterated ``passes`` times to wash out quadrature
    error in the covariance.
    """
    if phi.evaluator is None:
        raise ValidationError("isotropic normalization needs an evaluator")
    n = phi.grid.n
    S_total = np.eye(n)
    b_total = 0.0
    cur = phi
    for _ in range(passes):
        Z, cov = covariance(cur)
        w, U = np.linalg.eigh(cov)
        if w.min() <= 1e-12 * max(w.max(), 1.0):
            raise DegenerateCovariance(f"covariance eigenvalues {w}")
        S = U @ np.diag(np.sqrt(w)) @ U.T
        b = float(np.log(Z / np.linalg.det(S)))
        S_total = S_total @ S
        b_total += b
        St, bt = S_total.copy(), b_total
        expr = lambda pts, St=St, bt=bt: np.asarray(phi.evaluator(pts @ St.T), dtype=float) + bt
        Lnew = tuple(float(np.sum(np.abs(np.linalg.inv(St)), axis=1)[i] *
                           max(phi.grid.half_widths)) for i in range(n))
        g = BoxGrid(n, Lnew, phi.grid.resolutions if resolution is None else (resolution,) * n)
        cur = build_grid_fn(expr, g)
    A = np.linalg.inv(S_total)
    return AffineMap(A, b_total), cur


@dataclass
class MarginReport:
    margin: float
    err: float
    classification: str
    lhs: float
    rhs: float

    def to_dict(self) -> dict:
        return {"margin": self.margin, "err": self.err,
                "classification": self.classification,
                "lhs": self.lhs, "rhs": self.rhs}


def _classify(margin: float, err: float) -> str:
    if abs(margin) <= 3.0 * err:
        return "equality"
    return "holds" if margin > 0 else "violated"


def main_inequality_check(phi: GridFunction, p: float, V: PowerNormPotential) -> MarginReport:
    """Margin (int e^{-V})^p - BS_{p,V}(Phi) with error bars and classification."""
    rep = bs_pv(phi, p, V)
    rhs = V.lebesgue_mass() ** p
    margin = rhs - rep.value
    return MarginReport(margin, rep.value_err, _classify(margin, rep.value_err), rep.value, rhs)


def radial_inequality_check(profile: Callable, p: float, n: int,
                            r_max: float = 40.0) -> MarginReport:
    """Radial special case: both sides via 1-D quadrature with surface factor.

    profile is the scalar radial potential r -> Phi(r e) (convex, even).
    LHS = (int e^{-Phi(|x|^{p-2} x)/(p-1)})^{p-1} * int e^{-Phi*};
    RHS = (int e^{-|x|^p/p})^p.
    """
    if p < 2:
        raise ValidationError("the radial route is stated for p >= 2")
    omega = unit_ball_volume(2.0, n)

    def cap(r):
        return np.minimum(profile(r), 1e9)

    i1, i1err = sci_integrate.quad(
        lambda r: np.exp(-cap(r ** (p - 1.0)) / (p - 1.0)) * r ** (n - 1), 0, r_max, limit=200)
    rg = np.linspace(0, r_max, 8192)
    pv = cap(rg)

    def conj(s):
        return np.max(rg * s - pv)

    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sci_integrate.IntegrationWarning)
        i2, i2err = sci_integrate.quad(lambda s: np.exp(-conj(s)) * s ** (n - 1),
                                       0, r_max, limit=200)
    lhs = (n * omega * i1) ** (p - 1.0) * (n * omega * i2)
    rhs = (omega * special.gamma(n / p + 1.0) * p ** (n / p)) ** p
    err = lhs * ((p - 1.0) * i1err / max(i1, 1e-300) + i2err / max(i2, 1e-300) + 1e-3)
    margin = rhs - lhs
    return MarginReport(margin, err, _classify(margin, err), lhs, rhs)


# ---------------------------------------------------------------------------
# the random even convex test family
# ---------------------------------------------------------------------------

def random_even_convex(rng: np.random.Generator, n: int, k_terms: int = 4,
                       eps: float = 1e-3) -> Callable:
    """Phi(x) = sum_k c_k |<u_k, x>|^{p_k} + eps |x|^2, coercive and strictly convex."""
    k = int(rng.integers(2, k_terms + 1))
    us = rng.normal(size=(k, n))
    us /= np.linalg.norm(us, axis=1, keepdims=True)
    cs = rng.uniform(0.3, 2.0, size=k)
    ps = rng.uniform(1.0, 4.0, size=k)

    def expr(pts):
        pts = np.atleast_2d(pts)
        t = np.abs(pts @ us.T)
        return np.sum(cs * t ** ps, axis=1) + eps * np.sum(pts ** 2, axis=1)

    return expr


def build_member(expr: Callable, n: int, N: int = 160, target: float = 34.0) -> GridFunction:
    """Sample an evaluator on an auto-sized (per-axis) box grid and certify flags."""
    from .numgrid import suggest_half_widths
    Ls = suggest_half_widths(expr, n, target=target)
    return build_grid_fn(expr, BoxGrid(n, Ls, (N,) * n))
