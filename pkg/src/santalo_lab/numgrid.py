"""Grid-sampled convex functions, weighted quadrature, and validity checks.

Convex functions are stored as extended-real arrays on symmetric box grids;
``+inf`` marks points outside the effective domain.  Grids are midpoint-offset
by default so that nodes never sit on coordinate hyperplanes, which lets
singular product weights ``prod |x_i|^kappa`` (kappa > -1) be integrated
without special casing.  Every integral comes back with an error estimate:
a second-difference discretization term plus a tail bound derived from a
certified linear coercivity minorant ``f(x) >= a|x| + b``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

INF = float("inf")

# Default tolerances (relative to the value scale of the function at hand).
CONVEXITY_RTOL = 1e-9
EVENNESS_RTOL = 1e-9


class NotCoercive(Exception):
    """No positive linear minorant exists along some sampled ray."""


class TailUnbounded(Exception):
    """Integral tail cannot be bounded because the potential is not coercive."""


class SingularWeight(Exception):
    """A density has a non-integrable axis exponent (<= -1)."""


class EmptyDomain(Exception):
    """The function is identically +inf."""


class DegenerateCovariance(Exception):
    """Covariance of e^{-f} is numerically singular."""


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxGrid:
    """Symmetric tensor box [-L_1,L_1] x ... x [-L_n,L_n] with N_i cells per axis.

    Midpoint-offset grids place nodes at cell centers -L + (k+1/2)h, so the
    node set is symmetric under x -> -x and avoids all coordinate hyperplanes
    (N_i must be even).  Plain grids place nodes at -L + k*h including the
    endpoints and the origin.
    """

    n: int
    half_widths: tuple
    resolutions: tuple
    midpoint_offset: bool = True

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension {self.n} unsupported, need 1 <= n <= 3")
        if len(self.half_widths) != self.n or len(self.resolutions) != self.n:
            raise ValueError("half_widths/resolutions must have length n")
        for L, N in zip(self.half_widths, self.resolutions):
            if not (L > 0):
                raise ValueError("half widths must be positive")
            if N < 16:
                raise ValueError("resolution below 16")
            if self.midpoint_offset and N % 2:
                raise ValueError("midpoint-offset grids need even resolutions")
        object.__setattr__(self, "half_widths", tuple(float(L) for L in self.half_widths))
        object.__setattr__(self, "resolutions", tuple(int(N) for N in self.resolutions))

    @staticmethod
    def cube(n: int, L: float, N: int, midpoint_offset: bool = True) -> "BoxGrid":
        return BoxGrid(n, (L,) * n, (N,) * n, midpoint_offset)

    def spacing(self, i: int) -> float:
        return 2.0 * self.half_widths[i] / self.resolutions[i]

    @property
    def spacings(self) -> tuple:
        return tuple(self.spacing(i) for i in range(self.n))

    @property
    def shape(self) -> tuple:
        if self.midpoint_offset:
            return self.resolutions
        return tuple(N + 1 for N in self.resolutions)

    def axis(self, i: int) -> np.ndarray:
        L, N, h = self.half_widths[i], self.resolutions[i], self.spacing(i)
        if self.midpoint_offset:
            return -L + (np.arange(N) + 0.5) * h
        return -L + np.arange(N + 1) * h

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.n)]

    def mesh(self) -> list:
        return list(np.meshgrid(*self.axes(), indexing="ij", sparse=True))

    def points(self) -> np.ndarray:
        """All nodes as a flat (num_nodes, n) array."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def quad_weights(self) -> np.ndarray:
        """Per-node quadrature weights (cell volumes).

        Midpoint grids weight every node by a full cell; plain grids use
        half-cells on the boundary (trapezoid-style).
        """
        axes_w = []
        for i in range(self.n):
            h = self.spacing(i)
            if self.midpoint_offset:
                axes_w.append(np.full(self.resolutions[i], h))
            else:
                w = np.full(self.resolutions[i] + 1, h)
                w[0] = w[-1] = 0.5 * h
                axes_w.append(w)
        out = axes_w[0]
        for w in axes_w[1:]:
            out = np.multiply.outer(out, w)
        return out

    def spec(self) -> dict:
        return {
            "n": self.n,
            "half_widths": list(self.half_widths),
            "resolutions": list(self.resolutions),
            "midpoint_offset": self.midpoint_offset,
        }


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------

@dataclass
class GridFunction:
    """Extended-real function sampled on a BoxGrid.

    ``values`` is a float64 array shaped like the grid; +inf encodes points
    outside the domain, NaN is forbidden.  ``evaluator``, when present, is the
    closed-form expression the samples came from; resampling operations
    (rotation, affine reparametrization) use it to avoid interpolation error.
    """

    grid: BoxGrid
    values: np.ndarray
    even: Optional[bool] = None
    convex_certified: Optional[bool] = None
    evaluator: Optional[Callable] = None
    homogeneity: Optional[float] = None  # declared positive homogeneity degree

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if np.isnan(self.values).any():
            raise ValueError("NaN in grid function values")

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def scale(self) -> float:
        m = self.finite_mask
        if not m.any():
            return 1.0
        return max(1.0, float(np.abs(self.values[m]).max()))

    def min_value(self) -> float:
        m = self.finite_mask
        if not m.any():
            raise EmptyDomain("grid function is identically +inf")
        return float(self.values[m].min())


def build_grid_fn(expr: Callable, grid: BoxGrid, certify: bool = True) -> GridFunction:
    """Sample a pointwise evaluator on the grid and compute validity flags.

    ``expr`` takes an (m, n) array of points and returns m values (may be
    +inf).  Scalar-signature evaluators of one variable are accepted in 1-D.
    """
    pts = grid.points()
    vals = np.asarray(expr(pts), dtype=float).reshape(grid.shape)
    f = GridFunction(grid, vals, evaluator=expr)
    if certify:
        f.even, _ = check_even(f)
        f.convex_certified, _ = check_convex(f)
    return f


def check_even(f: GridFunction, rtol: float = EVENNESS_RTOL):
    """Max asymmetry max_x |f(x) - f(-x)|; an inf/finite mismatch fails outright."""
    v = f.values
    r = v[tuple(slice(None, None, -1) for _ in range(v.ndim))]
    both_inf = np.isinf(v) & np.isinf(r)
    mismatch = np.isinf(v) ^ np.isinf(r)
    if mismatch.any():
        return False, INF
    with np.errstate(invalid="ignore"):
        d = np.where(both_inf, 0.0, np.abs(v - r))
    asym = float(d.max())
    return asym <= rtol * f.scale(), asym


def _convexity_directions(n: int) -> list:
    # axis directions, then all sign patterns of diagonals, then a few skew steps
    dirs = [tuple(int(i == j) for j in range(n)) for i in range(n)]
    if n >= 2:
        if n == 2:
            dirs += [(1, 1), (1, -1), (1, 2), (2, 1), (2, -1)]
        else:
            dirs += [(1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1),
                     (0, 1, -1), (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1)]
    return dirs


def check_convex(f: GridFunction, rtol: float = CONVEXITY_RTOL):
    """Midpoint-convexity sweep over aligned node triples.

    Reports max over sampled triples of f(mid) - (f(x)+f(y))/2.  A finite
    midpoint flanked by one infinite endpoint imposes no constraint; an
    infinite midpoint between finite endpoints is a domain-convexity failure.
    """
    v = f.values
    worst = -INF
    for d in _convexity_directions(f.grid.n):
        sl_c, sl_p, sl_m = [], [], []
        for k in d:
            a = abs(k)
            sl_c.append(slice(a, v.shape[len(sl_c)] - a) if a else slice(None))
            if k >= 0:
                sl_p.append(slice(2 * k, v.shape[len(sl_p)]) if k else slice(None))
                sl_m.append(slice(0, v.shape[len(sl_m)] - 2 * k) if k else slice(None))
            else:
                sl_p.append(slice(0, v.shape[len(sl_p)] + 2 * k))
                sl_m.append(slice(-2 * k, v.shape[len(sl_m)]))
        if any(s.start is not None and s.start >= v.shape[i] for i, s in enumerate(sl_c)):
            continue
        mid = v[tuple(sl_c)]
        hi = v[tuple(sl_p)]
        lo = v[tuple(sl_m)]
        ends_finite = np.isfinite(hi) & np.isfinite(lo)
        bad_domain = ends_finite & np.isinf(mid)
        if bad_domain.any():
            return False, INF
        with np.errstate(invalid="ignore"):
            viol = np.where(ends_finite & np.isfinite(mid), mid - 0.5 * (hi + lo), -INF)
        if viol.size:
            worst = max(worst, float(viol.max()))
    ok = worst <= rtol * f.scale()
    return ok, worst


def check_coercive(f: GridFunction):
    """Certify f(x) >= a|x| + b with a > 0, via chord slopes to the boundary.

    For even convex f the chord slope from the center to a boundary node is a
    lower bound on the slope past that node, so a = min over finite boundary
    nodes of (f(x_b) - min f)/|x_b| is valid outside the box as well.  b is
    then the exact minimum of f - a|x| over the finite nodes.

    Raises NotCoercive when the certified a is not positive (flat direction).
    """
    v = f.values
    m0 = f.min_value()
    pts = f.grid.points().reshape(f.grid.shape + (f.grid.n,))
    boundary = np.zeros(f.grid.shape, dtype=bool)
    for i in range(f.grid.n):
        sl = [slice(None)] * f.grid.n
        sl[i] = 0
        boundary[tuple(sl)] = True
        sl[i] = -1
        boundary[tuple(sl)] = True
    fin_b = boundary & f.finite_mask
    if not fin_b.any():
        # domain compactly inside the box: any slope certifies the (empty) tail
        r = np.linalg.norm(pts, axis=-1)
        rmax_dom = float(r[f.finite_mask].max())
        a = max(1.0, f.scale() / max(rmax_dom, 1e-12))
        b = float(np.min(f.values[f.finite_mask] - a * r[f.finite_mask]))
        return a, b
    r_b = np.linalg.norm(pts[fin_b], axis=-1)
    slopes = (v[fin_b] - m0) / r_b
    a = float(slopes.min())
    if a <= 1e-12 * max(1.0, f.scale()) / max(f.grid.half_widths):
        raise NotCoercive(f"boundary chord slope {a:.3e} is not positive")
    r = np.linalg.norm(pts, axis=-1)
    b = float(np.min(v[f.finite_mask] - a * r[f.finite_mask]))
    return a, b


def is_coercive(f: GridFunction) -> bool:
    try:
        check_coercive(f)
        return True
    except NotCoercive:
        return False


def coercivity_candidates(f: GridFunction) -> list:
    """Certified exterior minorants f >= a|x| + b, steep-tight and offset-tight.

    The first pair maximizes a (boundary chord slopes, exact node offset b).
    The second anchors at the minimum: by the chord-through-origin property
    of convex even functions, f(z) >= min f + (|z|/diag)(min boundary f -
    min f) outside the box; its b = min f avoids the deeply negative offsets
    that make e^{-alpha b} explode for high-degree potentials.
    """
    out = [check_coercive(f)]
    v = f.values
    m0 = f.min_value()
    boundary = np.zeros(f.grid.shape, dtype=bool)
    for i in range(f.grid.n):
        sl = [slice(None)] * f.grid.n
        sl[i] = 0
        boundary[tuple(sl)] = True
        sl[i] = -1
        boundary[tuple(sl)] = True
    fin_b = boundary & f.finite_mask
    if fin_b.any():
        f_bd = float(v[fin_b].min())
        diag = float(np.sqrt(sum(L * L for L in f.grid.half_widths)))
        a2 = (f_bd - m0) / diag
        if a2 > 0:
            out.append((a2, m0))
    return out


def best_tail_bound(f: GridFunction, alpha: float, rho: Density) -> float:
    return min(tail_bound(a, b, alpha, rho, f.grid)
               for a, b in coercivity_candidates(f))


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Density:
    """Weight on R^n: unit, radial-power, product-power, det-hess-dual, or grid.

    ``axis_exponents`` record the local power behaviour |x_i|^{kappa_i} used
    by the tail bound and by the integrability gate; ``radial_exponent`` is an
    extra |x|_{radial_norm}^s factor (det-hess-dual weights).  ``fn`` must be
    evaluable at arbitrary points for every kind.
    """

    kind: str
    n: int
    fn: Callable
    axis_exponents: tuple = ()
    radial_exponent: float = 0.0
    radial_norm: float = 2.0
    const: float = 1.0
    gamma: float = 0.0
    log_concave: Optional[bool] = None
    unconditional: bool = False
    radial: bool = False
    axis_decreasing: bool = False

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(pts, dtype=float))

    def smooth_part(self, pts: np.ndarray) -> np.ndarray:
        """Density divided by its singular axis factor prod |x_i|^{kappa_i}."""
        pts = np.asarray(pts, dtype=float)
        out = self.fn(pts)
        for i, k in enumerate(self.axis_exponents):
            if k != 0.0:
                out = out * np.abs(pts[..., i]) ** (-k)
        return out

    def axis_cell_weights(self, grid: "BoxGrid") -> list:
        """Exact per-axis cell integrals of |t|^{kappa_i} (reduce to h for kappa=0)."""
        out = []
        for i, k in enumerate(self.axis_exponents):
            ax = grid.axis(i)
            h = grid.spacing(i)
            if grid.midpoint_offset:
                lo, hi = ax - 0.5 * h, ax + 0.5 * h
            else:
                lo, hi = ax - 0.5 * h, ax + 0.5 * h
                lo[0], hi[-1] = ax[0], ax[-1]
            if k == 0.0:
                out.append(hi - lo)
            else:
                F = lambda t: np.sign(t) * np.abs(t) ** (k + 1.0) / (k + 1.0)
                out.append(F(hi) - F(lo))
        return out


def unit_density(n: int) -> Density:
    return Density("unit", n, lambda p: np.ones(p.shape[:-1]),
                   axis_exponents=(0.0,) * n, log_concave=True, unconditional=True,
                   radial=True, axis_decreasing=True)


def radial_power_density(gamma: float, n: int) -> Density:
    """rho = |x|^{-gamma}, 0 <= gamma < n (locally integrable, decreasing)."""
    if not (0 <= gamma < n):
        raise ValueError("radial-power density needs 0 <= gamma < n")

    def fn(p):
        r = np.linalg.norm(p, axis=-1)
        with np.errstate(divide="ignore"):
            return r ** (-gamma)

    return Density("radial_power", n, fn, axis_exponents=(0.0,) * n, gamma=gamma,
                   log_concave=(gamma == 0), unconditional=True, radial=True,
                   axis_decreasing=True)


def product_power_density(kappas: Sequence[float]) -> Density:
    """rho = prod |x_i|^{kappa_i} with every kappa_i > -1."""
    kappas = tuple(float(k) for k in kappas)
    if any(k <= -1 for k in kappas):
        raise SingularWeight("product-power exponent <= -1 is not integrable")

    def fn(p):
        with np.errstate(divide="ignore"):
            return np.prod(np.abs(p) ** np.asarray(kappas), axis=-1)

    return Density("product_power", len(kappas), fn, axis_exponents=kappas,
                   log_concave=False, unconditional=True,
                   axis_decreasing=all(k <= 0 for k in kappas))


def grid_density(fn: Callable, n: int, log_concave: Optional[bool] = None,
                 unconditional: bool = False, radial: bool = False,
                 axis_decreasing: bool = False) -> Density:
    """Custom weight given by an arbitrary evaluator (symmetry claims declared)."""
    return Density("grid", n, fn, axis_exponents=(0.0,) * n,
                   log_concave=log_concave, unconditional=unconditional,
                   radial=radial, axis_decreasing=axis_decreasing)


@dataclass(frozen=True)
class MeasureSpec:
    """Probability measure e^{-alpha*potential} * rho / Z."""

    potential: object
    density: Density
    alpha: float = 1.0

    def normalizer(self):
        if isinstance(self.potential, GridFunction):
            return integrate_exp(self.potential, self.density, self.alpha)
        raise TypeError("closed-form potentials are normalized by their own modules")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _axis_tail_integral(kappa: float, lam: float, lower: float = 0.0) -> float:
    """Upper bound for int_{|t| > lower} e^{-lam |t|} |t|^kappa dt (kappa > -1)."""
    s = kappa + 1.0
    full = special.gamma(s) / lam ** s
    if lower <= 0:
        return 2.0 * full
    return float(2.0 * full * special.gammaincc(s, lam * lower))


def tail_bound(a: float, b: float, alpha: float, rho: Density, grid: BoxGrid) -> float:
    """Bound int_{outside box} e^{-alpha f} rho dx using f >= a|x| + b.

    The exterior is covered by slabs {|x_i| > L_i}; on each slab
    e^{-alpha a |x|} <= prod_j e^{-alpha a |x_j| / sqrt(n)} and the weight is
    bounded by closed-form Gamma integrals per axis.
    """
    n = grid.n
    lam = alpha * a / np.sqrt(n)
    if lam <= 0:
        raise TailUnbounded("nonpositive decay rate in tail bound")
    kaps = rho.axis_exponents if rho.axis_exponents else (0.0,) * n
    s = rho.radial_exponent

    def slab(i: int, kappa_bump: Optional[int]) -> float:
        L = grid.half_widths[i]
        out = 1.0
        for j in range(n):
            kap = kaps[j] + (s if kappa_bump == j else 0.0)
            if j == i:
                out *= _axis_tail_integral(kap, lam, L)
            else:
                out *= _axis_tail_integral(kap, lam)
        return out

    total = 0.0
    pref = rho.const * np.exp(-alpha * b)
    if rho.kind == "radial_power":
        for i in range(n):
            total += grid.half_widths[i] ** (-rho.gamma) * slab(i, None)
    elif rho.kind == "det_hess_dual" and s > 0:
        # |x|_{q*}^s <= (n max_j |x_j|)^s <= n^s sum_j |x_j|^s : bump one axis at a time
        for i in range(n):
            for j in range(n):
                total += n ** s * slab_i_bump(i, j, kaps, s, lam, grid)
    elif rho.kind == "det_hess_dual":
        # s <= 0: on slab {|x_i| > L_i}, |x|_{q*} >= |x_i| > L_i
        for i in range(n):
            total += grid.half_widths[i] ** s * slab(i, None)
    elif rho.kind == "grid":
        bmax = _boundary_max(rho, grid)
        for i in range(n):
            total += bmax * slab(i, None)
        return float(pref * total)
    else:
        for i in range(n):
            total += slab(i, None)
    return float(pref * total)


def slab_i_bump(i: int, j: int, kaps: tuple, s: float, lam: float, grid: BoxGrid) -> float:
    out = 1.0
    for k in range(len(kaps)):
        kap = kaps[k] + (s if k == j else 0.0)
        if k == i:
            out *= _axis_tail_integral(kap, lam, grid.half_widths[i])
        else:
            out *= _axis_tail_integral(kap, lam)
    return out


def _boundary_max(rho: Density, grid: BoxGrid) -> float:
    pts = grid.points().reshape(grid.shape + (grid.n,))
    mask = np.zeros(grid.shape, dtype=bool)
    for i in range(grid.n):
        sl = [slice(None)] * grid.n
        sl[i] = 0
        mask[tuple(sl)] = True
        sl[i] = -1
        mask[tuple(sl)] = True
    return float(np.max(rho(pts[mask])))


def _second_difference_l1(G: np.ndarray) -> float:
    """Sum over axes of |second difference| summed over nodes (times 1)."""
    tot = 0.0
    for i in range(G.ndim):
        sl_c = [slice(None)] * G.ndim
        sl_p = [slice(None)] * G.ndim
        sl_m = [slice(None)] * G.ndim
        sl_c[i], sl_p[i], sl_m[i] = slice(1, -1), slice(2, None), slice(0, -2)
        d2 = G[tuple(sl_p)] - 2.0 * G[tuple(sl_c)] + G[tuple(sl_m)]
        tot += float(np.abs(d2).sum())
    return tot


def integrate_exp(f: GridFunction, rho: Density, alpha: float = 1.0,
                  minorant: Optional[tuple] = None):
    """Quadrature of int e^{-alpha f} rho dx with an error estimate.

    Singular axis factors prod |x_i|^{kappa_i} of the weight are integrated
    exactly per cell; the smooth remainder uses the midpoint rule.  The error
    estimate is discretization (second differences of the smooth integrand)
    plus the coercivity tail bound.  Raises TailUnbounded for non-coercive f
    and SingularWeight for kappa <= -1.
    """
    if any(k <= -1 for k in rho.axis_exponents):
        raise SingularWeight("axis exponent <= -1")
    if minorant is None:
        try:
            candidates = coercivity_candidates(f)
        except NotCoercive as e:
            raise TailUnbounded(str(e)) from e
    else:
        candidates = [minorant]
    pts = f.grid.points().reshape(f.grid.shape + (f.grid.n,))
    singular = any(k != 0.0 for k in rho.axis_exponents)
    w = rho.smooth_part(pts) if singular else rho(pts)
    with np.errstate(over="ignore", invalid="ignore"):
        G = np.where(np.isfinite(f.values),
                     np.exp(-alpha * np.minimum(f.values, 700.0 / max(alpha, 1e-300))) * w, 0.0)
    if singular:
        axes_w = rho.axis_cell_weights(f.grid)
        qw = axes_w[0]
        for wi in axes_w[1:]:
            qw = np.multiply.outer(qw, wi)
    else:
        qw = f.grid.quad_weights()
    value = float(np.sum(G * qw))
    disc = _weighted_second_difference(G, qw) / 24.0
    tail = min(tail_bound(a, b, alpha, rho, f.grid) for a, b in candidates)
    return value, disc + tail


def _weighted_second_difference(G: np.ndarray, qw: np.ndarray) -> float:
    """Sum over axes of |second difference of G| times the local cell weight."""
    tot = 0.0
    for i in range(G.ndim):
        sl_c = [slice(None)] * G.ndim
        sl_p = [slice(None)] * G.ndim
        sl_m = [slice(None)] * G.ndim
        sl_c[i], sl_p[i], sl_m[i] = slice(1, -1), slice(2, None), slice(0, -2)
        d2 = G[tuple(sl_p)] - 2.0 * G[tuple(sl_c)] + G[tuple(sl_m)]
        tot += float((np.abs(d2) * qw[tuple(sl_c)]).sum())
    return tot


# ---------------------------------------------------------------------------
# sampling from mu ~ e^{-c |x|_q^p}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplePoints:
    points: np.ndarray
    weights: np.ndarray
    seed: int
    count: int


def sample_mu(V, count: int, seed: int) -> SamplePoints:
    """Draw ``count`` points from mu ~ e^{-c |x|_q^p} dx, deterministically per seed.

    Direction: cone measure of the l_q ball via Z/|Z|_q with iid coordinates
    of density ~ e^{-|z|^q}.  Radius: inverse CDF of r^{n-1} e^{-c r^p} dr,
    i.e. an incomplete-gamma inversion.
    """
    if not (V.p > 1 and V.q >= 1):
        raise ValueError("sampler needs p > 1 and q >= 1")
    rng = np.random.default_rng(seed)
    n, p, q, c = V.n, V.p, V.q, V.c
    g = rng.gamma(1.0 / q, size=(count, n)) ** (1.0 / q)
    sgn = rng.integers(0, 2, size=(count, n)) * 2 - 1
    z = sgn * g
    norm_q = np.sum(np.abs(z) ** q, axis=1) ** (1.0 / q)
    u = z / norm_q[:, None]
    t = special.gammaincinv(n / p, rng.random(count))
    r = (t / c) ** (1.0 / p)
    pts = u * r[:, None]
    w = np.full(count, 1.0 / count)
    return SamplePoints(pts, w, seed, count)


# ---------------------------------------------------------------------------
# interpolation and serialization
# ---------------------------------------------------------------------------

def interpolate(f: GridFunction, pts: np.ndarray, outside=INF) -> np.ndarray:
    """Multilinear interpolation; +inf at any stencil corner or outside the box."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g = f.grid
    n = g.n
    idx = []
    frac = []
    inside = np.ones(len(pts), dtype=bool)
    for i in range(n):
        ax = g.axis(i)
        x = pts[:, i]
        inside &= (x >= ax[0]) & (x <= ax[-1])
        j = np.clip(np.searchsorted(ax, x) - 1, 0, len(ax) - 2)
        idx.append(j)
        frac.append((x - ax[j]) / (ax[j + 1] - ax[j]))
    out = np.zeros(len(pts))
    bad = np.zeros(len(pts), dtype=bool)
    for corner in range(2 ** n):
        sel = tuple(idx[i] + ((corner >> i) & 1) for i in range(n))
        cv = f.values[sel]
        wt = np.ones(len(pts))
        for i in range(n):
            fi = frac[i]
            wt = wt * (fi if (corner >> i) & 1 else 1.0 - fi)
        bad |= ~np.isfinite(cv) & (wt > 0)
        out += np.where(np.isfinite(cv), cv, 0.0) * wt
    out[bad] = outside
    out[~inside] = outside
    return out


def provenance_hash(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()[:16]


def save_grid_fn(f: GridFunction, path, fmt: str = "bin") -> None:
    """Write values (flat binary or CSV with an "inf" sentinel) plus a JSON sidecar."""
    path = Path(path)
    if fmt == "bin":
        f.values.astype("<f8").tofile(path)
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write("index,value\n")
            for i, v in enumerate(f.values.ravel()):
                fh.write(f"{i},{'inf' if np.isinf(v) else repr(float(v))}\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    meta = {
        "format": fmt,
        "grid": f.grid.spec(),
        "flags": {"even": f.even, "convex_certified": f.convex_certified},
        "provenance": provenance_hash(f.values),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_grid_fn(path) -> GridFunction:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        meta = json.load(fh)
    g = BoxGrid(meta["grid"]["n"], tuple(meta["grid"]["half_widths"]),
                tuple(meta["grid"]["resolutions"]), meta["grid"]["midpoint_offset"])
    if meta["format"] == "bin":
        vals = np.fromfile(path, dtype="<f8").reshape(g.shape)
    else:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, usecols=1,
                          converters={1: lambda s: INF if s in (b"inf", "inf") else float(s)})
        vals = np.asarray(rows, dtype=float).reshape(g.shape)
    f = GridFunction(g, vals, meta["flags"]["even"], meta["flags"]["convex_certified"])
    if meta["provenance"] != provenance_hash(f.values):
        raise ValueError("provenance hash mismatch")
    return f


# ---------------------------------------------------------------------------
# helpers used across modules
# ---------------------------------------------------------------------------

def suggest_half_width(expr: Callable, n: int, target: float = 34.0,
                       rays: int = 64, L_max: float = 256.0) -> float:
    """Smallest L (doubling search) with min_{|x|_inf = L} expr >= target."""
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.linspace(0, 2 * np.pi, rays, endpoint=False)
        if n == 2:
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        else:
            rng = np.random.default_rng(0)
            dirs = rng.normal(size=(rays, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.max(np.abs(dirs), axis=1, keepdims=True)  # hit the box faces

    def face_min(L):
        return float(np.min(np.asarray(expr(L * dirs), dtype=float)))

    lo, hi = 0.0, 1.0
    while hi < L_max and face_min(hi) < target:
        lo, hi = hi, hi * 1.7
    if hi >= L_max:
        return L_max
    for _ in range(20):  # tighten so the box is not needlessly wide
        mid = 0.5 * (lo + hi)
        if face_min(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def suggest_half_widths(expr: Callable, n: int, target: float = 34.0,
                        rays: int = 64, L_max: float = 256.0) -> tuple:
    """Per-axis half widths: smallest box with expr >= target on each face."""
    if n == 1:
        return (suggest_half_width(expr, 1, target, rays, L_max),)
    rng = np.random.default_rng(0)
    out = []
    for i in range(n):
        # sample points on the +/- face of axis i, coordinates in [-1, 1]
        base = rng.uniform(-1.0, 1.0, size=(rays, n))
        base[:, i] = 1.0
        face = np.vstack([base, base * np.where(np.arange(n) == i, -1.0, 1.0)])

        def face_min(L, aspect):
            pts = face * aspect
            pts[:, i] = np.sign(face[:, i]) * L
            return float(np.min(np.asarray(expr(pts), dtype=float)))

        lo, hi = 0.0, 1.0
        while hi < L_max and face_min(hi, hi) < target:
            lo, hi = hi, hi * 1.7
        if hi >= L_max:
            out.append(L_max)
            continue
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            if face_min(mid, hi) >= target:
                hi2 = mid
                hi, lo = hi2, lo
            else:
                lo = mid
        out.append(hi)
    # grow each axis so faces stay above target when other axes use their widths
    out = np.asarray(out)
    for _ in range(3):
        ok = True
        for i in range(n):
            pts = rng.uniform(-1.0, 1.0, size=(rays, n)) * out
            pts[:, i] = out[i]
            pts2 = pts.copy()
            pts2[:, i] = -out[i]
            m = float(min(np.min(expr(pts)), np.min(expr(pts2))))
            if m < target * 0.98:
                out[i] *= 1.3
                ok = False
        if ok:
            break
    return tuple(float(v) for v in out)


def covariance(f: GridFunction):
    """Mass, mean-free covariance of the probability measure e^{-f}/Z."""
    pts = f.grid.points()
    with np.errstate(over="ignore"):
        w = np.where(np.isfinite(f.values.ravel()), np.exp(-np.minimum(f.values.ravel(), 700)), 0.0)
    w = w * f.grid.quad_weights().ravel()
    Z = w.sum()
    if not np.isfinite(Z) or Z <= 0:
        raise DegenerateCovariance("e^{-f} has no mass on the grid")
    mean = pts.T @ w / Z
    centered = pts - mean
    cov = (centered * w[:, None]).T @ centered / Z
    return float(Z), cov
