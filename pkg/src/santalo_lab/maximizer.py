"""Maximizer diagnostics: Euler-Lagrange residuals, fixed points, transport.

A maximizer of the weighted product functional balances the two measures:
e^{-a Phi} rho1 / I1 = e^{-b Phi*(grad Phi)} rho2(grad Phi) det D^2 Phi / I2.
In the radial/1-D setting the balance is enforced by exact CDF matching (the
1-D Brenier map is a composition of CDFs), giving a damped fixed-point
iteration.  The remaining operations are diagnostics: pointwise residuals,
the homogeneity field W = <x, grad Phi> - p Phi, pushforward CDF gaps, the
second-order (Brascamp-Lieb type) inequality at a maximizer, the W-field
operator residual, and the Minkowski-type angular residual in the plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sci_integrate
from scipy import special

from .functionals import BSParams, bs_general, bs_pv, mass_sized_pair
from .legendre import conjugate
from .numgrid import BoxGrid, Density, GridFunction, build_grid_fn, unit_density
from .potentials import NonConvexProfile, PowerNormPotential


class NonInvertibleHessian(Exception):
    pass


class Diverged(Exception):
    pass


@dataclass
class ELConfig:
    """Fixed-point / search configuration."""
    params: object                  # BSParams or (p, V) tuple
    representation: str = "radial-profile-1D"
    damping: float = 0.5
    max_iterations: int = 400
    tolerance: float = 1e-9
    n: int = 1
    r_max: float = 8.0
    resolution: int = 4096

    def __post_init__(self):
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def _as_radial_weights(params, n: int):
    """(alpha, rho1(r), beta, rho2(s)) for the radial balance."""
    if isinstance(params, BSParams):
        e1 = np.zeros(n)
        rho1 = lambda r: params.rho1(np.outer(r, _unit(n)))
        rho2 = lambda s: params.rho2(np.outer(s, _unit(n)))
        return params.alpha, rho1, params.beta, rho2
    p, V = params
    ps = V.p_star
    pref = (V.dual().c * ps) ** n * (ps - 1.0)
    if abs(V.q - 2.0) > 1e-12:
        raise ValueError("the radial route needs a rotation-invariant potential (q = 2)")
    rho2 = lambda s: pref * s ** (n * (ps - 2.0))
    return 1.0, (lambda r: np.ones_like(r)), 1.0 / (p - 1.0), rho2


def _unit(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


# ---------------------------------------------------------------------------
# radial fixed point by CDF matching
# ---------------------------------------------------------------------------

@dataclass
class RadialProfile:
    r: np.ndarray
    phi: np.ndarray
    n: int

    def __call__(self, r):
        return np.interp(np.abs(r), self.r, self.phi)

    def slope(self):
        return np.gradient(self.phi, self.r)


def _conj_1d_profile(r: np.ndarray, phi: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Conjugate of the even extension of a radial profile, at radii s >= 0."""
    out = np.empty_like(s)
    cand = r[None, :] * s[:, None] - phi[None, :]
    np.max(cand, axis=1, out=out)
    return np.maximum(out, -phi[0])   # the sup includes t = 0


def fixed_point_radial(config: ELConfig):
    """Damped CDF-matching iteration for the radial Euler-Lagrange balance.

    Returns (RadialProfile, trace) where trace rows carry the sup-norm of
    each update.  Raises Diverged if the tolerance is not reached.
    """
    n = config.n
    alpha, rho1, beta, rho2 = _as_radial_weights(config.params, n)
    N = config.resolution
    r = (np.arange(N) + 0.5) * (config.r_max / N)
    h = r[1] - r[0]
    phi = 0.5 * r ** 2 * 0.8 + 0.05 * r ** 4   # deliberately non-quadratic start
    phi -= phi[0]
    trace = []
    for it in range(config.max_iterations):
        smax = max(float(np.gradient(phi, r).max()) * 1.1, 1.0)
        s = (np.arange(N) + 0.5) * (smax / N)
        phis = _conj_1d_profile(r, phi, s)
        dmu = np.exp(-alpha * (phi - phi.min())) * rho1(r) * r ** (n - 1)
        dnu = np.exp(-beta * (phis - phis.min())) * rho2(s) * s ** (n - 1)
        Fmu = np.cumsum(dmu)
        Fmu /= Fmu[-1]
        Fnu = np.cumsum(dnu)
        Fnu /= Fnu[-1]
        # invert only inside the live quantile window; the inverse CDF is
        # ill-conditioned on the measure-free tails
        live = Fmu <= 1.0 - 1e-12
        if not live.any():
            raise Diverged("measure collapsed onto the origin cell")
        T = np.interp(np.minimum(Fmu, 1.0 - 1e-13), Fnu, s)
        k = int(np.flatnonzero(live)[-1])
        k0 = max(k - 8, 0)
        slope = max((T[k] - T[k0]) / (r[k] - r[k0]), 0.0) if k > k0 else 0.0
        T[k + 1:] = T[k] + slope * (r[k + 1:] - r[k])
        phi_new = np.concatenate([[0.0], np.cumsum(0.5 * (T[1:] + T[:-1]) * h)])
        phi_new = phi_new[:N] + T[0] * h * 0.5
        phi_new -= phi_new[0]
        cand = (1.0 - config.damping) * phi + config.damping * phi_new
        cand -= cand[0]
        # pin the neutral scaling direction: keep E_mu[r^2] at its initial value
        dmu_c = np.exp(-alpha * (cand - cand.min())) * rho1(r) * r ** (n - 1)
        m2 = float(np.sum(dmu_c * r ** 2) / np.sum(dmu_c))
        if it == 0:
            m2_ref = m2
        else:
            t = np.sqrt(m2 / m2_ref)
            tail_slope = (cand[-1] - cand[-9]) / (r[-1] - r[-9])
            rs = t * r
            cand = np.where(rs <= r[-1], np.interp(rs, r, cand),
                            cand[-1] + tail_slope * (rs - r[-1]))
            cand -= cand[0]
        mass_region = Fmu <= 1.0 - 1e-9
        step = float(np.max(np.abs(cand - phi)[mass_region]))
        phi = cand
        trace.append(step)
        if it > 0 and step <= config.tolerance * max(1.0, float(np.abs(phi[mass_region]).max())):
            return RadialProfile(r, phi, n), trace
    raise Diverged(f"no convergence after {config.max_iterations} iterations "
                   f"(last update {trace[-1]:.3e})")


def quadratic_fit_residual(profile: RadialProfile) -> float:
    """Relative L2 residual of regressing phi against r^2 on the mass region."""
    r, phi = profile.r, profile.phi
    w = np.exp(-(phi - phi.min())) * r ** (profile.n - 1)
    w /= w.sum()
    X = r ** 2
    a = np.sum(w * X * phi) / np.sum(w * X * X)
    res = np.sqrt(np.sum(w * (phi - a * X) ** 2))
    scale = np.sqrt(np.sum(w * phi ** 2))
    return float(res / max(scale, 1e-300))


def pushforward_gap_radial(profile: RadialProfile, params) -> float:
    """sup-CDF distance between (Phi')#mu and nu for a radial profile."""
    n = profile.n
    alpha, rho1, beta, rho2 = _as_radial_weights(params, n)
    r, phi = profile.r, profile.phi
    T = np.gradient(phi, r)
    order = np.argsort(T)
    dmu = np.exp(-alpha * (phi - phi.min())) * rho1(r) * r ** (n - 1)
    atoms = dmu[order] / dmu.sum()
    Fpush_s = T[order]
    # mid-atom staircase: each cell's mass is centred on its image point
    Fpush = np.cumsum(atoms) - 0.5 * atoms
    smax = max(Fpush_s.max(), 1e-6)
    M = 16384
    s = (np.arange(M) + 0.5) * (smax / M)
    phis = _conj_1d_profile(r, phi, s)
    dnu = np.exp(-beta * (phis - phis.min())) * rho2(s) * s ** (n - 1)
    Fnu = (np.cumsum(dnu) - 0.5 * dnu) / dnu.sum()
    F1 = np.interp(s, Fpush_s, Fpush, left=0.0, right=1.0)
    return float(np.max(np.abs(F1 - Fnu)))


# ---------------------------------------------------------------------------
# grid diagnostics
# ---------------------------------------------------------------------------

def _fd_grad_list(values: np.ndarray, axes: list) -> list:
    g = np.gradient(values, *axes)
    return [g] if len(axes) == 1 else list(g)


def _fd_gradient(phi: GridFunction) -> np.ndarray:
    return np.stack(_fd_grad_list(phi.values, phi.grid.axes()), axis=-1)


def _fd_hessian(phi: GridFunction) -> np.ndarray:
    axes = phi.grid.axes()
    grads = _fd_grad_list(phi.values, axes)
    n = phi.grid.n
    H = np.empty(phi.grid.shape + (n, n))
    for i in range(n):
        gi = _fd_grad_list(grads[i], axes)
        for j in range(n):
            H[..., i, j] = gi[j]
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def el_residual(phi: GridFunction, params) -> GridFunction:
    """Pointwise Euler-Lagrange residual on the interior of the grid.

    residual = e^{-a Phi} rho1 / I1
             - e^{-b Phi*(grad Phi)} det(D^2 Phi) rho2(grad Phi) / I2,
    with Phi*(grad Phi) = <x, grad Phi> - Phi (exact for differentiable
    convex functions) and I1, I2 quadrature normalizers.
    """
    if isinstance(params, tuple):
        p, V = params
        params = BSParams(1.0, 1.0 / (p - 1.0), unit_density(V.n),
                          V.det_hess_dual_density())
    pair = mass_sized_pair(phi, params.beta)
    from .numgrid import integrate_exp
    I1, _ = integrate_exp(phi, params.rho1, params.alpha)
    I2, _ = integrate_exp(pair.dual, params.rho2, params.beta)
    pts = phi.grid.points().reshape(phi.grid.shape + (phi.grid.n,))
    G = _fd_gradient(phi)
    H = _fd_hessian(phi)
    detH = np.linalg.det(H)
    if np.any(detH[np.isfinite(detH)] < -1e-8):
        pass  # boundary artifacts are masked below
    star = np.einsum("...i,...i->...", pts, G) - phi.values
    with np.errstate(over="ignore", invalid="ignore"):
        lhs = np.exp(-params.alpha * phi.values) * params.rho1(pts) / I1
        rhs = np.exp(-params.beta * star) * np.maximum(detH, 0.0) * params.rho2(G) / I2
    res = lhs - rhs
    # mask the outermost rings (one-sided differences), non-finite spots, and
    # the axis bands when the dual weight is axis-singular (FD cannot resolve
    # the compensating degeneracy of det D^2 Phi there)
    mask = np.zeros(phi.grid.shape, dtype=bool)
    inner = tuple(slice(2, -2) for _ in range(phi.grid.n))
    mask[inner] = True
    if any(k != 0.0 for k in params.rho2.axis_exponents):
        for i in range(phi.grid.n):
            mask &= np.abs(pts[..., i]) > 3.0 * phi.grid.spacing(i)
    if params.rho2.radial_exponent != 0.0:
        mask &= np.linalg.norm(pts, axis=-1) > 4.0 * max(phi.grid.spacings)
    res = np.where(mask & np.isfinite(res), res, 0.0)
    return GridFunction(phi.grid, res)


@dataclass
class HomogeneityReport:
    p: float
    mean: float
    l2_defect: float
    sup_defect: float
    field: GridFunction


def homogeneity_defect(phi: GridFunction, p: float) -> HomogeneityReport:
    """W = <x, grad Phi> - p Phi; deviation of W from its mu-mean.

    The mean is weighted by mu ~ e^{-Phi}; sup over the region carrying at
    least 1e-8 of the peak density, interior nodes only.
    """
    pts = phi.grid.points().reshape(phi.grid.shape + (phi.grid.n,))
    G = _fd_gradient(phi)
    W = np.einsum("...i,...i->...", pts, G) - p * phi.values
    with np.errstate(over="ignore"):
        wdens = np.where(np.isfinite(phi.values), np.exp(-(phi.values - phi.min_value())), 0.0)
    inner = np.zeros(phi.grid.shape, dtype=bool)
    inner[tuple(slice(2, -2) for _ in range(phi.grid.n))] = True
    wdens = np.where(inner & np.isfinite(W), wdens, 0.0)
    Z = wdens.sum()
    mean = float(np.sum(W * wdens) / Z)
    l2 = float(np.sqrt(np.sum((W - mean) ** 2 * wdens) / Z))
    live = wdens > 1e-8 * wdens.max()
    sup = float(np.max(np.abs(W - mean)[live]))
    return HomogeneityReport(p, mean, l2, sup, GridFunction(phi.grid, np.where(inner, W, 0.0)))


def second_order_check(phi: GridFunction, params, trials: Sequence, budget: int = 0):
    """Margins of Var_mu f <= (1/(a+b)) int <(D^2 Phi)^{-1} grad f, grad f> dmu.

    trials are (f, grad_f) closed-form pairs; everything is grid quadrature
    against mu ~ e^{-a Phi} rho1.
    """
    if isinstance(params, tuple):
        p, V = params
        params = BSParams(1.0, 1.0 / (p - 1.0), unit_density(V.n),
                          V.det_hess_dual_density())
    pts = phi.grid.points().reshape(phi.grid.shape + (phi.grid.n,))
    H = _fd_hessian(phi)
    with np.errstate(over="ignore"):
        w = np.where(np.isfinite(phi.values),
                     np.exp(-params.alpha * (phi.values - phi.min_value())), 0.0)
    w = w * params.rho1(pts) * phi.grid.quad_weights()
    inner = np.zeros(phi.grid.shape, dtype=bool)
    inner[tuple(slice(2, -2) for _ in range(phi.grid.n))] = True
    w = np.where(inner, w, 0.0)
    w /= w.sum()
    out = []
    lam = 1.0 / (params.alpha + params.beta)
    for f, gf in trials:
        fv = f(pts.reshape(-1, phi.grid.n)).reshape(phi.grid.shape)
        gv = gf(pts.reshape(-1, phi.grid.n)).reshape(phi.grid.shape + (phi.grid.n,))
        mean = np.sum(w * fv)
        var = np.sum(w * (fv - mean) ** 2)
        try:
            sol = np.linalg.solve(H[inner], gv[inner][..., None])[..., 0]
        except np.linalg.LinAlgError as e:
            raise NonInvertibleHessian(str(e)) from e
        quad = np.einsum("ki,ki->k", sol, gv[inner])
        dir_ = np.sum(w[inner] * quad)
        out.append({"var": float(var), "dirichlet": float(dir_),
                    "margin": float(lam * dir_ - var)})
    return out


def lw_check(phi: GridFunction, p: float, V: PowerNormPotential):
    """||L W|| on the interior, L the transport-metric operator of BS_{p,V}.

    L f = Tr[(D^2 Phi)^{-1} D^2 f]
        - <grad f, x/(p-1) - grad log det D^2 V*(grad Phi)>.
    Returns sup and mu-weighted L2 norms over the live region.
    """
    pts = phi.grid.points().reshape(phi.grid.shape + (phi.grid.n,))
    G = _fd_gradient(phi)
    H = _fd_hessian(phi)
    Wf = np.einsum("...i,...i->...", pts, G) - p * phi.values
    Wgrid = GridFunction(phi.grid, np.where(np.isfinite(Wf), Wf, 0.0))
    GW = _fd_gradient(Wgrid)
    HW = _fd_hessian(Wgrid)
    try:
        Hinv_HW = np.linalg.solve(H.reshape(-1, phi.grid.n, phi.grid.n),
                                  HW.reshape(-1, phi.grid.n, phi.grid.n))
    except np.linalg.LinAlgError as e:
        raise NonInvertibleHessian(str(e)) from e
    tr = np.trace(Hinv_HW, axis1=-2, axis2=-1).reshape(phi.grid.shape)
    drift = pts / (p - 1.0) - V.grad_log_det_hess_dual(G.reshape(-1, phi.grid.n)).reshape(
        phi.grid.shape + (phi.grid.n,))
    LW = tr - np.einsum("...i,...i->...", GW, drift)
    with np.errstate(over="ignore"):
        w = np.where(np.isfinite(phi.values), np.exp(-(phi.values - phi.min_value())), 0.0)
    inner = np.zeros(phi.grid.shape, dtype=bool)
    inner[tuple(slice(3, -3) for _ in range(phi.grid.n))] = True
    live = inner & (w > 1e-6 * w.max()) & np.isfinite(LW)
    l2 = float(np.sqrt(np.sum(LW[live] ** 2 * w[live]) / np.sum(w[live])))
    return {"sup": float(np.max(np.abs(LW[live]))), "l2": l2}


# ---------------------------------------------------------------------------
# parametric ascent
# ---------------------------------------------------------------------------

@dataclass
class ParametricFamily:
    """Family theta -> member of the admissible class for coordinate ascent."""
    name: str
    make: Callable            # theta -> GridFunction
    theta0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def ascend_bs(family: ParametricFamily, params, budget: int = 60,
              seed: int = 0, rel_step: float = 0.25):
    """Derivative-free coordinate search; returns (best theta, value, trace).

    The best-so-far trace is non-decreasing by construction.
    """
    def value(theta):
        phi = family.make(theta)
        if isinstance(params, tuple):
            return bs_pv(phi, params[0], params[1], cross_check=False).value
        return bs_general(phi, params).value

    theta = np.array(family.theta0, dtype=float)
    best = value(theta)
    trace = [best]
    step = rel_step * (family.upper - family.lower)
    evals = 1
    while evals < budget and step.max() > 1e-4 * (family.upper - family.lower).max():
        improved = False
        for i in range(len(theta)):
            for sgn in (+1.0, -1.0):
                cand = theta.copy()
                cand[i] = np.clip(cand[i] + sgn * step[i], family.lower[i], family.upper[i])
                if np.allclose(cand, theta):
                    continue
                v = value(cand)
                evals += 1
                if v > best:
                    best, theta, improved = v, cand, True
                trace.append(best)
                if evals >= budget:
                    break
            if evals >= budget:
                break
        if not improved:
            step *= 0.5
    return theta, best, trace


# ---------------------------------------------------------------------------
# the n = 2 Minkowski-type angular residual
# ---------------------------------------------------------------------------

@dataclass
class AngleProfile:
    """Positive 2-pi-periodic profile with first and second derivatives."""
    f: Callable
    d1: Callable
    d2: Callable

    @staticmethod
    def constant(c: float) -> "AngleProfile":
        return AngleProfile(lambda th: c * np.ones_like(th),
                            lambda th: np.zeros_like(th),
                            lambda th: np.zeros_like(th))

    @staticmethod
    def trig(c0: float, eps: float, k: int = 2) -> "AngleProfile":
        return AngleProfile(lambda th: c0 + eps * np.cos(k * th),
                            lambda th: -eps * k * np.sin(k * th),
                            lambda th: -eps * k * k * np.cos(k * th))


def _dual_profile_normalizers(p: float, phi_t: AngleProfile, v_t: AngleProfile,
                              M: int = 4096):
    """I_mu = int e^{-Phi} dx and I_nu = int e^{-Phi*/(p-1)} det D^2 V* dy
    from the dual angle profiles (n = 2), by periodic trapezoid rules."""
    ps = p / (p - 1.0)
    th = (np.arange(M) + 0.5) * (2 * np.pi / M)
    # {Phi <= 1} has support function h = p (p-1)^{-1/p*} phit
    h = p * (p - 1.0) ** (-1.0 / ps) * phi_t.f(th)
    hp = p * (p - 1.0) ** (-1.0 / ps) * phi_t.d1(th)
    areaK = 0.5 * np.mean(h * h - hp * hp) * 2 * np.pi
    if areaK <= 0:
        raise NonConvexProfile("support function gives nonpositive area")
    I_mu = special.gamma(2.0 / p + 1.0) * areaK
    a = phi_t.f(th)
    v = v_t.f(th)
    vpp = v_t.d2(th)
    if np.any(v + vpp <= 0):
        raise NonConvexProfile("v + v'' must be positive")
    # radial integral of e^{-r^{p*} a^{p*}/(p-1)} r^{2 p*-3} in closed form
    radial = special.gamma(2.0 - 2.0 / ps) * (p - 1.0) ** (2.0 - 2.0 / ps) / ps
    I_nu = (ps - 1.0) * ps ** 2 * radial * np.mean(
        v ** (2 * ps - 1.0) * (v + vpp) * a ** (2.0 - 2.0 * ps)) * 2 * np.pi
    return I_mu, I_nu


def minkowski_residual_2d(phi_t: AngleProfile, v_t: AngleProfile, p: float,
                          C: Optional[float] = None, M: int = 2048):
    """residual(theta) of the angular Monge-Ampere balance in the plane.

    residual = phit^{2(p*-1)+1}(phit + phit'') - C vt^{2(p*-1)+1}(vt + vt''),
    with C = I_mu / I_nu (the ratio of the two normalizing integrals) when
    not supplied.  Solutions are exactly the homothety class phit = t vt.
    """
    ps = p / (p - 1.0)
    th = (np.arange(M) + 0.5) * (2 * np.pi / M)
    a = phi_t.f(th)
    app = phi_t.d2(th)
    b = v_t.f(th)
    bpp = v_t.d2(th)
    if np.any(a <= 0) or np.any(b <= 0):
        raise NonConvexProfile("profiles must be positive")
    if np.any(a + app <= 0) or np.any(b + bpp <= 0):
        raise NonConvexProfile("profile + second derivative must stay positive")
    if C is None:
        I_mu, I_nu = _dual_profile_normalizers(p, phi_t, v_t)
        C = I_mu / I_nu
    e = 2.0 * (ps - 1.0) + 1.0
    res = a ** e * (a + app) - C * b ** e * (b + bpp)
    return {"theta": th, "residual": res, "sup": float(np.max(np.abs(res))),
            "C": float(C)}