"""Origin-symmetric convex bodies: polars, volumes, weighted gradient images.

Polytopes carry an exact vertex representation; polars, volumes and gauges
are computed in closed form (shoelace / fan decompositions).  Weighted
volumes int_K det D^2 V* use a fan decomposition whose radial factor is
integrated exactly by homogeneity and whose chord factor uses Gauss-Jacobi
nodes split at axis crossings, so the singular product weights never limit
accuracy.  Smooth bodies (balls) are represented as inscribed polygons with
documented vertex counts; inscribed-polytope bias is toward smaller volume.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import special

from .angular import segment_power_nodes
from .potentials import PowerNormPotential, unit_ball_volume


class OriginNotInterior(Exception):
    pass


class NotOneSymmetric(Exception):
    pass


@dataclass(frozen=True)
class Polytope:
    """Origin-symmetric polytope in dimension 1, 2, or 3 (V-representation)."""

    n: int
    vertices: np.ndarray

    # -- constructors --------------------------------------------------------

    @staticmethod
    def from_vertices(verts: Iterable, symmetrize: bool = False) -> "Polytope":
        V = np.atleast_2d(np.asarray(list(verts), dtype=float))
        n = V.shape[1]
        if symmetrize:
            V = np.vstack([V, -V])
        if n == 1:
            a = float(np.abs(V).max())
            if a <= 0:
                raise OriginNotInterior("degenerate interval")
            return Polytope(1, np.array([[-a], [a]]))
        if n == 2:
            V = _hull2d(V)
            P = Polytope(2, V)
            P._validate()
            return P
        if n == 3:
            from scipy.spatial import ConvexHull
            hull = ConvexHull(V)
            P = Polytope(3, V[hull.vertices])
            P._validate()
            return P
        raise ValueError("dimension must be 1, 2, or 3")

    @staticmethod
    def box(n: int, half: float = 1.0) -> "Polytope":
        corners = np.array(np.meshgrid(*([[-half, half]] * n))).T.reshape(-1, n)
        return Polytope.from_vertices(corners)

    @staticmethod
    def cross_polytope(n: int, radius: float = 1.0) -> "Polytope":
        return Polytope.from_vertices(np.vstack([radius * np.eye(n), -radius * np.eye(n)]))

    @staticmethod
    def regular_ngon(k: int = 720, radius: float = 1.0, phase: float = 0.0) -> "Polytope":
        th = phase + 2 * np.pi * np.arange(k) / k
        return Polytope(2, radius * np.stack([np.cos(th), np.sin(th)], axis=1))

    @staticmethod
    def random_symmetric_polygon(rng: np.random.Generator, k: int = 8,
                                 r_lo: float = 0.5, r_hi: float = 2.0) -> "Polytope":
        th = np.sort(rng.uniform(0, np.pi, k))
        r = rng.uniform(r_lo, r_hi, k)
        pts = r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
        return Polytope.from_vertices(np.vstack([pts, -pts]))

    # -- validation ----------------------------------------------------------

    def _validate(self):
        V = self.vertices
        if self.n == 2:
            nxt = np.roll(V, -1, axis=0)
            cross = V[:, 0] * nxt[:, 1] - V[:, 1] * nxt[:, 0]
            if np.any(cross <= 0):
                raise OriginNotInterior("origin is not strictly inside the polygon")
        if self.n == 3:
            A, b = self.halfspaces()
            if np.any(b <= 1e-12):
                raise OriginNotInterior("origin is not strictly inside the polytope")

    def is_symmetric(self, tol: float = 1e-10) -> bool:
        V = self.vertices
        for v in V:
            if np.min(np.linalg.norm(V + v, axis=1)) > tol * max(1.0, np.linalg.norm(v)):
                return False
        return True

    def is_one_symmetric(self, tol: float = 1e-10) -> bool:
        """Invariance under coordinate sign flips and permutations."""
        V = self.vertices
        sup0 = self.support(np.eye(self.n))
        perms = [np.arange(self.n)]
        if self.n == 2:
            perms.append(np.array([1, 0]))
        elif self.n == 3:
            import itertools
            perms = [np.array(p) for p in itertools.permutations(range(3))]
        dirs = _sphere_dirs(self.n, 64)
        h = self.support(dirs)
        for p in perms:
            for signs in np.array(np.meshgrid(*([[-1, 1]] * self.n))).T.reshape(-1, self.n):
                h2 = self.support(dirs[:, p] * signs)
                if np.max(np.abs(h - h2)) > tol * max(1.0, h.max()):
                    return False
        return True

    # -- geometry ------------------------------------------------------------

    def volume(self) -> float:
        V = self.vertices
        if self.n == 1:
            return float(V.max() - V.min())
        if self.n == 2:
            nxt = np.roll(V, -1, axis=0)
            return float(0.5 * np.abs(np.sum(V[:, 0] * nxt[:, 1] - V[:, 1] * nxt[:, 0])))
        from scipy.spatial import ConvexHull
        return float(ConvexHull(self.vertices).volume)

    def halfspaces(self):
        """(A, b) with K = {x : A x <= b}, b > 0."""
        if self.n == 1:
            a = self.vertices.max()
            return np.array([[1.0], [-1.0]]), np.array([a, a])
        if self.n == 2:
            V = self.vertices
            nxt = np.roll(V, -1, axis=0)
            e = nxt - V
            normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
            b = np.sum(normals * V, axis=1)
            return normals, b
        from scipy.spatial import ConvexHull
        hull = ConvexHull(self.vertices)
        eq = hull.equations  # a.x + d <= 0
        return eq[:, :3], -eq[:, 3]

    def polar(self) -> "Polytope":
        """K° = {y : <v, y> <= 1 for all vertices v}; exact for polytopes."""
        cached = getattr(self, "_polar_cache", None)
        if cached is not None:
            return cached
        out = self._polar_uncached()
        object.__setattr__(self, "_polar_cache", out)
        return out

    def _polar_uncached(self) -> "Polytope":
        if self.n == 1:
            return Polytope(1, np.array([[-1.0], [1.0]]) / self.vertices.max())
        if self.n == 2:
            V = self.vertices
            nxt = np.roll(V, -1, axis=0)
            out = np.empty_like(V)
            for i in range(len(V)):
                out[i] = np.linalg.solve(np.stack([V[i], nxt[i]]), np.ones(2))
            return Polytope(2, out)
        A, b = self.halfspaces()
        if np.any(b <= 0):
            raise OriginNotInterior("polar needs the origin strictly inside")
        return Polytope.from_vertices(A / b[:, None])

    def support(self, dirs: np.ndarray) -> np.ndarray:
        return np.max(np.atleast_2d(dirs) @ self.vertices.T, axis=1)

    def gauge(self, pts: np.ndarray) -> np.ndarray:
        """Minkowski functional |x|_K = h_{K°}(x) for symmetric K."""
        return self.polar().support(pts)

    def radial(self, dirs: np.ndarray) -> np.ndarray:
        g = self.gauge(dirs)
        return 1.0 / g

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        A, b = self.halfspaces()
        return np.all(np.atleast_2d(pts) @ A.T <= b[None, :] + tol, axis=1)

    def scale(self, t: float) -> "Polytope":
        return Polytope(self.n, t * self.vertices)


def _hull2d(pts: np.ndarray) -> np.ndarray:
    """Convex hull of planar points, CCW order, via monotone chain."""
    P = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    P = np.unique(P, axis=0)
    if len(P) < 3:
        raise ValueError("need at least 3 distinct points")

    def cross2(u, v):
        return u[0] * v[1] - u[1] * v[0]

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2 and cross2(out[-1] - out[-2], p - out[-2]) <= 1e-14 * max(
                    1.0, np.abs(p).max()) ** 2:
                out.pop()
            out.append(p)
        return out

    lower = half(P)
    upper = half(P[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _sphere_dirs(n: int, k: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = np.linspace(0, 2 * np.pi, k, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(12)
    d = rng.normal(size=(k, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# weighted volumes over polytopes
# ---------------------------------------------------------------------------

def _chord_integral(A: np.ndarray, B: np.ndarray, weight_fn, axis_exponents,
                    degree_total: float, n_quad: int) -> float:
    """int over triangle (0, A, B) of a (degree_total)-homogeneous weight.

    The radial direction is exact by homogeneity; along the chord A->B the
    weight's axis singularities |z_i|^{kappa_i} are split at sign changes and
    absorbed into Gauss-Jacobi endpoints.
    """
    cross = abs(A[0] * B[1] - A[1] * B[0])
    if cross == 0.0:
        return 0.0
    breaks = [0.0, 1.0]
    for i in range(2):
        den = A[i] - B[i]
        if abs(den) > 1e-15:
            v = A[i] / den
            if 1e-14 < v < 1 - 1e-14:
                breaks.append(v)
    breaks = sorted(set(breaks))
    total = 0.0
    for v0, v1 in zip(breaks[:-1], breaks[1:]):
        kl = kr = 0.0
        for i in range(2):
            c0 = (1 - v0) * A[i] + v0 * B[i]
            c1 = (1 - v1) * A[i] + v1 * B[i]
            span = max(abs(A[i]), abs(B[i]), 1e-300)
            if abs(c0) < 1e-12 * span:
                kl += axis_exponents[i]
            if abs(c1) < 1e-12 * span:
                kr += axis_exponents[i]
        t, w = segment_power_nodes(n_quad, kl, kr)
        v = v0 + (v1 - v0) * t
        P = (1 - v)[:, None] * A[None, :] + v[:, None] * B[None, :]
        # weight_fn already carries the |P_i'| (v1-v0) scale of the vanishing
        # coordinate; only the singular t-powers are moved into the rule
        smooth = weight_fn(P) * t ** (-kl) * (1 - t) ** (-kr)
        total += (v1 - v0) * np.sum(w * smooth)
    return cross / (degree_total + 2.0) * total


def grad_image_volume(V: PowerNormPotential, K: Polytope, n_quad: int = 48):
    """|grad V*(K)| = int_K det D^2 V*(z) dz with an error estimate.

    For n = 2 the fan-and-chord rule above is used (exact in the singular
    factors); n = 1 is closed form; n = 3 falls back to recursive triangle
    subdivision on tetrahedron faces with a two-level error estimate.
    """
    ps, qs = V.p_star, V.q_star
    if V.n == 1:
        a = K.vertices.max()
        pref = (V.dual().c * ps) * (ps - 1.0)
        val = 2.0 * pref * a ** (ps - 1.0) / (ps - 1.0)
        return float(val), 1e-14 * abs(val)
    if V.n == 2:
        kaps = (qs - 2.0, qs - 2.0)
        deg = 2.0 * (ps - 2.0)
        pref = (V.dual().c * ps) ** 2 * (ps - 1.0) * (qs - 1.0)

        def weight_fn(P):
            r = np.sum(np.abs(P) ** qs, axis=-1) ** (1.0 / qs)
            return pref * r ** (2.0 * (ps - qs)) * np.prod(np.abs(P) ** (qs - 2.0), axis=-1)

        def run(nq):
            verts = K.vertices
            nxt = np.roll(verts, -1, axis=0)
            return sum(_chord_integral(a, b, weight_fn, kaps, deg, nq)
                       for a, b in zip(verts, nxt))

        v1, v2 = run(n_quad // 2), run(n_quad)
        return float(v2), abs(v2 - v1) + 1e-12 * abs(v2)
    return _grad_image_volume_3d(V, K)


def _grad_image_volume_3d(V: PowerNormPotential, K: Polytope, level: int = 5):
    """Cone-over-facet decomposition; radial factor exact by homogeneity,
    facet integrals by centroid subdivision (graded error estimate)."""
    from scipy.spatial import ConvexHull
    hull = ConvexHull(K.vertices)
    deg = 3.0 * (V.p_star - 2.0)

    def facet_integral(tri, k):
        i, j = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        keep = (i + j) < k
        i, j = i[keep], j[keep]
        a_up, b_up = (i + 1 / 3) / k, (j + 1 / 3) / k
        keep2 = (i + j) < k - 1
        a_dn, b_dn = (i[keep2] + 2 / 3) / k, (j[keep2] + 2 / 3) / k
        a = np.concatenate([a_up, a_dn])
        b = np.concatenate([b_up, b_dn])
        P = (np.outer(1 - a - b, tri[0]) + np.outer(a, tri[1]) + np.outer(b, tri[2]))
        w = V.det_hess_dual(P)
        return float(np.sum(w) * 0.5 / (k * k))

    def level_sum(k):
        total = 0.0
        for simplex in hull.simplices:
            tri = K.vertices[simplex]
            det6 = abs(np.linalg.det(np.stack(tri)))
            total += det6 / (deg + 3.0) * facet_integral(tri, k)
        return total

    v1, v2 = level_sum(2 ** (level - 1)), level_sum(2 ** level)
    return float(v2), abs(v2 - v1) + 1e-10 * abs(v2)


def kko_check(K: Polytope, V: PowerNormPotential, p: float):
    """Margin |{V <= 1/p}|^p - |K| |grad V*(K°)|^{p-1} with error bars."""
    if abs(p - V.p) > 1e-12:
        raise ValueError("p must match the potential degree")
    Ko = K.polar()
    gi, gi_err = grad_image_volume(V, Ko)
    lhs = K.volume() * gi ** (p - 1.0)
    err = K.volume() * (p - 1.0) * gi ** (p - 2.0) * gi_err
    rhs = V.level_set_volume(1.0 / p) ** p
    margin = rhs - lhs
    cls = "equality" if abs(margin) <= 3 * err + 1e-12 * rhs else ("holds" if margin > 0 else "violated")
    return {"margin": margin, "err": err, "classification": cls, "lhs": lhs, "rhs": rhs}


def bs_bodies_ratio_constant(n: int, p: float) -> float:
    """c(n,p) = n^p p^{n-p} Gamma(n/p)^p relating BS_{p,V}(|x|_K^p) to the set form."""
    return float(n ** p * p ** (n - p) * special.gamma(n / p) ** p)


def bs_equals_bodies_check(K: Polytope, V: PowerNormPotential, p: float,
                           resolution: int = 256, target: float = 34.0):
    """Measured ratio BS_{p,V}(|x|_K^p) / (|K| |grad V*(K°)|^{p-1}) vs c(n,p)."""
    from .functionals import bs_pv
    from .numgrid import BoxGrid, build_grid_fn, suggest_half_widths
    expr = lambda pts: K.gauge(np.atleast_2d(pts)) ** p
    Ls = suggest_half_widths(expr, K.n, target=target)
    if K.n == 1:
        grid = BoxGrid.cube(1, Ls[0], max(resolution, 1024))
    else:
        grid = BoxGrid(K.n, Ls, (resolution,) * K.n)
    phi = build_grid_fn(expr, grid)
    phi.homogeneity = p
    rep = bs_pv(phi, p, V)
    Ko = K.polar()
    gi, gi_err = grad_image_volume(V, Ko)
    body = K.volume() * gi ** (p - 1.0)
    ratio = rep.value / body
    expected = bs_bodies_ratio_constant(K.n, p)
    rel_err_est = rep.value_err / rep.value + (p - 1.0) * gi_err / gi
    return {"ratio": ratio, "expected": expected,
            "rel_gap": ratio / expected - 1.0, "rel_err_est": rel_err_est,
            "bs": rep.value, "body": body}


def level_set_fixed_point_check(V: PowerNormPotential, p: float, k: int = 720):
    """Radial gap between grad V*((K_p)°) and K_p for K_p = {V <= 1/p}."""
    th = 2 * np.pi * (np.arange(k) + 0.31) / k
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    r = (1.0 / (V.c * p)) ** (1.0 / p) / V.norm_q(u)
    Kp = Polytope(2, r[:, None] * u)
    Ko = Kp.polar()
    W = V.dual()
    # push the polar boundary (vertices and edge midpoints) through grad V*
    B = Ko.vertices
    mids = 0.5 * (B + np.roll(B, -1, axis=0))
    img = W.grad(np.vstack([B, mids]))
    ang = np.arctan2(img[:, 1], img[:, 0])
    order = np.argsort(ang)
    ang, rad = ang[order], np.linalg.norm(img, axis=1)[order]
    probe = np.linspace(-np.pi, np.pi, 256)
    rimg = np.interp(probe, ang, rad, period=2 * np.pi)
    uprobe = np.stack([np.cos(probe), np.sin(probe)], axis=1)
    rK = (1.0 / (V.c * p)) ** (1.0 / p) / V.norm_q(uprobe)
    return float(np.max(np.abs(rimg - rK)) / np.max(rK))


# ---------------------------------------------------------------------------
# needle counterexample and sup-product functionals
# ---------------------------------------------------------------------------

def sup_product_polygon(P: Polytope) -> float:
    """sup over the polygon of |y_1 y_2|, exact via per-edge critical points."""
    V = P.vertices
    best = float(np.abs(V[:, 0] * V[:, 1]).max())
    nxt = np.roll(V, -1, axis=0)
    d = nxt - V
    # y1(t) y2(t) is quadratic in t; interior critical point in closed form
    a = d[:, 0] * d[:, 1]
    b = V[:, 0] * d[:, 1] + V[:, 1] * d[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(a) > 1e-300, -b / (2 * a), -1.0)
    ok = (t > 0) & (t < 1)
    if ok.any():
        y = V[ok] + t[ok, None] * d[ok]
        best = max(best, float(np.abs(y[:, 0] * y[:, 1]).max()))
    return best


def needle_body(R: float, k: int = 720) -> Polytope:
    """K_R° = [-Rv, Rv] + B_2^2 with v = (1,1), as a polygon."""
    disc = Polytope.regular_ngon(k).vertices
    v = np.array([1.0, 1.0])
    pts = np.vstack([disc + R * v, disc - R * v])
    return Polytope.from_vertices(pts)


def needle_blowup(R_list, k: int = 720):
    """Rows (R, |K_R|, sup-product over K_R°, LHS = |K_R| * sup-product)."""
    rows = []
    for R in R_list:
        Ko = needle_body(float(R), k)
        K = Ko.polar()
        sp = sup_product_polygon(Ko)
        vol = K.volume()
        rows.append({"R": float(R), "volume_K": vol, "sup_product": sp,
                     "lhs": vol * sp})
    return rows


def sup_product_check_1sym(K: Polytope, tol: float = 1e-9):
    """Margin 2^n/n! - |K| sup_{K°} prod |y_i| for 1-symmetric K."""
    if not K.is_one_symmetric():
        raise NotOneSymmetric("body lacks cube symmetries")
    Ko = K.polar()
    if K.n == 2:
        sp = sup_product_polygon(Ko)
    else:
        raise NotImplementedError("sup-product is exact for n = 2 only")
    lhs = K.volume() * sp
    bound = 2.0 ** K.n / special.factorial(K.n)
    return {"margin": float(bound - lhs), "lhs": lhs, "bound": float(bound),
            "holds": lhs <= bound + tol}


# ---------------------------------------------------------------------------
# moment identity and the rotation-invariant inequality
# ---------------------------------------------------------------------------

def radial_moment_over_polar(K: Polytope, q: float, n_quad: int = 64):
    """int_{K°} |x|^{n(q-2)} dx via the exact-radial fan rule (n = 2)."""
    if K.n != 2:
        raise NotImplementedError("n = 2 only")
    Ko = K.polar()
    deg = 2.0 * (q - 2.0)

    def weight_fn(P):
        return np.linalg.norm(P, axis=-1) ** deg

    def run(nq):
        verts = Ko.vertices
        nxt = np.roll(verts, -1, axis=0)
        return sum(_chord_integral(a, b, weight_fn, (0.0, 0.0), deg, nq)
                   for a, b in zip(verts, nxt))

    v1, v2 = run(n_quad // 2), run(n_quad)
    return float(v2), abs(v2 - v1) + 1e-13 * abs(v2)


def support_power_integral(K: Polytope, exponent: float, n_quad: int = 32):
    """int_{S^1} h_K(theta)^exponent dtheta, split at the normal-fan angles."""
    V = K.vertices
    nxt = np.roll(V, -1, axis=0)
    e = nxt - V
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    brk = np.sort(np.mod(np.arctan2(normals[:, 1], normals[:, 0]), 2 * np.pi))
    brk = np.concatenate([brk, [brk[0] + 2 * np.pi]])
    t, w = np.polynomial.legendre.leggauss(n_quad)
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        th = 0.5 * (a + b) + 0.5 * (b - a) * t
        u = np.stack([np.cos(th), np.sin(th)], axis=1)
        h = K.support(u)
        total += 0.5 * (b - a) * np.sum(w * h ** exponent)
    return float(total)


def moment_integral_identity(K: Polytope, q: float):
    """Both sides of int_{K°} |x|^{n(q-2)} = (1/((q-1)n)) int_S h_K^{(1-q)n}."""
    if not (1 < q <= 2):
        raise ValueError("stated for 1 < q <= 2")
    n = K.n
    lhs, lhs_err = radial_moment_over_polar(K, q)
    rhs = support_power_integral(K, (1.0 - q) * n) / ((q - 1.0) * n)
    return {"lhs": lhs, "rhs": rhs, "rel_gap": abs(lhs - rhs) / abs(rhs),
            "lhs_err": lhs_err}


def rot_inv_inequality_check(K: Polytope, q: float, tol: float = 1e-9):
    """(q-1)^{1/(q-1)} |K| (int_{K°} |x|^{n(q-2)})^{1/(q-1)} <= |B_2^n|^{q/(q-1)}."""
    if not (1 < q <= 2):
        raise ValueError("stated for q in (1, 2]")
    n = K.n
    mom, mom_err = radial_moment_over_polar(K, q)
    lhs = (q - 1.0) ** (1.0 / (q - 1.0)) * K.volume() * mom ** (1.0 / (q - 1.0))
    rhs = unit_ball_volume(2.0, n) ** (q / (q - 1.0))
    err = lhs * mom_err / max(mom, 1e-300) / (q - 1.0)
    margin = rhs - lhs
    equal = abs(margin) <= max(3 * err, 1e-3 * rhs)
    return {"margin": margin, "err": err, "lhs": lhs, "rhs": rhs,
            "holds": margin >= -3 * err - tol, "equality": bool(equal)}
