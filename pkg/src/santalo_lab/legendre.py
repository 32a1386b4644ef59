"""Discrete Legendre-Fenchel transform and duality identities.

The conjugate of a grid function is the exact node-sup
Phi*(y) = max_i (<x_i, y> - Phi(x_i)), computed by n sequential 1-D passes
(the transform factorizes over axes).  Single lines use the monotone-chain
upper-hull sweep, O(N + M); multi-axis passes use a chunked vectorized max
over nodes, which evaluates the same float expressions and therefore agrees
with brute force bit for bit.  The discrete conjugate is a lower bound on the
true conjugate; the bias direction is reported to downstream consumers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numgrid import (INF, BoxGrid, EmptyDomain, GridFunction, check_convex,
                      check_even, interpolate)


class SingularMatrix(Exception):
    pass


# ---------------------------------------------------------------------------
# 1-D building blocks
# ---------------------------------------------------------------------------

def conj1d_hull(x: np.ndarray, f: np.ndarray, y: np.ndarray):
    """Exact g_j = max_i (x_i y_j - f_i) via the lower hull of (x_i, f_i).

    Collinear hull points are kept so the candidate set never loses a float
    maximizer; the sweep pointer only advances, so the cost is O(N + M).
    Returns (values, argmax node indices).
    """
    finite = np.isfinite(f)
    xs, fs = x[finite], f[finite]
    orig = np.flatnonzero(finite)
    if xs.size == 0:
        return np.full(y.shape, -INF), np.zeros(y.shape, dtype=np.intp)
    hx, hf, hi = [], [], []
    for i, (xi, fi) in enumerate(zip(xs, fs)):
        while len(hx) >= 2 and \
                (hf[-1] - hf[-2]) * (xi - hx[-1]) > (fi - hf[-1]) * (hx[-1] - hx[-2]):
            hx.pop()
            hf.pop()
            hi.pop()
        hx.append(xi)
        hf.append(fi)
        hi.append(orig[i])
    g = np.empty(y.shape)
    am = np.empty(y.shape, dtype=np.intp)
    k, K = 0, len(hx)
    for j, yj in enumerate(y):
        v = hx[k] * yj - hf[k]
        while k + 1 < K:
            v2 = hx[k + 1] * yj - hf[k + 1]
            if v2 >= v:
                k += 1
                v = v2
            else:
                break
        g[j] = v
        am[j] = hi[k]
    return g, am


def conj_lines_dense(lines: np.ndarray, x: np.ndarray, y: np.ndarray,
                     chunk: int = 32):
    """max_i (x_i y_j - f_i) for a stack of lines, chunked to bound memory.

    Returns (values, argmax indices along the transformed axis).
    """
    L = lines.shape[0]
    xy = x[:, None] * y[None, :]
    out = np.empty((L, y.size))
    am = np.empty((L, y.size), dtype=np.intp)
    for s in range(0, L, chunk):
        block = lines[s:s + chunk]
        cand = xy[None, :, :] - block[:, :, None]  # +inf entries become -inf
        a = np.argmax(cand, axis=1)
        am[s:s + chunk] = a
        out[s:s + chunk] = np.take_along_axis(cand, a[:, None, :], axis=1)[:, 0, :]
    return out, am


def conj1d_brute(x: np.ndarray, f: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Reference oracle: plain max over all nodes (same float association)."""
    return conj_lines_dense(f[None, :], x, y)[0][0]


# ---------------------------------------------------------------------------
# the n-pass transform
# ---------------------------------------------------------------------------

@dataclass
class ConjugatePair:
    primal: GridFunction
    dual: GridFunction
    dual_grid: BoxGrid
    fy_violation: float
    # per dual node: the maximizing primal node (a subgradient of the dual)
    support_x: Optional[np.ndarray] = None
    support_f: Optional[np.ndarray] = None
    support_idx: Optional[np.ndarray] = None


def _max_axis_slope(f: GridFunction, axis: int) -> float:
    v = np.moveaxis(f.values, axis, -1)
    h = f.grid.spacing(axis)
    d = np.diff(v, axis=-1)
    fin = np.isfinite(d)
    if not fin.any():
        return 1.0 / max(f.grid.half_widths)
    return float(np.abs(d[fin]).max() / h)


def auto_dual_grid(f: GridFunction, margin: float = 1.1) -> BoxGrid:
    """Dual box spanning ``margin`` times the maximal finite-difference slope."""
    widths = tuple(max(margin * _max_axis_slope(f, i), 1e-6) for i in range(f.grid.n))
    return BoxGrid(f.grid.n, widths, f.grid.resolutions, midpoint_offset=f.grid.midpoint_offset)


def _transform_axis(A: np.ndarray, x: np.ndarray, y: np.ndarray, axis: int):
    moved = np.moveaxis(A, axis, -1)
    shape = moved.shape
    lines = moved.reshape(-1, shape[-1])
    if lines.shape[0] == 1:
        out, am = conj1d_hull(x, lines[0], y)
        out, am = out[None, :], am[None, :]
    else:
        out, am = conj_lines_dense(lines, x, y)
    out = np.moveaxis(out.reshape(shape[:-1] + (y.size,)), -1, axis)
    am = np.moveaxis(am.reshape(shape[:-1] + (y.size,)), -1, axis)
    return out, am


def conjugate(f: GridFunction, dual_grid: Optional[BoxGrid] = None) -> ConjugatePair:
    """Discrete Legendre transform of f on an auto-sized (or given) dual grid.

    Non-convex input is allowed; the node-sup automatically yields the
    conjugate of the convex hull.  Raises EmptyDomain for f identically +inf.
    The maximizing primal node of every dual node is recorded: it is an exact
    subgradient, giving supporting planes for off-grid evaluation.
    """
    if not np.isfinite(f.values).any():
        raise EmptyDomain("conjugate of the empty function")
    if dual_grid is None:
        dual_grid = auto_dual_grid(f)
    A = f.values
    n = f.grid.n
    argmaxes = []
    for k, axis in enumerate(reversed(range(n))):
        if k > 0:
            A = -A
        A, am = _transform_axis(A, f.grid.axis(axis), dual_grid.axis(axis), axis)
        argmaxes.append((axis, am))
    # compose per-pass argmaxes into the full maximizing primal index
    idx = [None] * n
    argmaxes.reverse()  # axis order 0, 1, ..., n-1
    for axis, am in argmaxes:
        # am is indexed by (x_0..x_{axis-1}, y_axis..y_{n-1}): earlier axes
        # take already-resolved primal indices, later ones dual indices
        take = tuple(idx[i] if i < axis else _broadcast_index(dual_grid.shape, i)
                     for i in range(n))
        idx[axis] = am[take]
        if idx[axis].shape != dual_grid.shape:
            idx[axis] = np.broadcast_to(idx[axis], dual_grid.shape)
    support_x = np.stack(
        [f.grid.axis(i)[idx[i]] for i in range(n)], axis=-1)
    support_f = f.values[tuple(idx)]
    dual = GridFunction(dual_grid, A)
    dual.even, _ = check_even(dual)
    dual.convex_certified, _ = check_convex(dual)
    gap, _ = fenchel_young_gap_raw(f, dual, samples=256)
    return ConjugatePair(f, dual, dual_grid, max(0.0, -gap), support_x, support_f,
                         np.stack(idx, axis=-1))


def _broadcast_index(shape: tuple, axis: int) -> np.ndarray:
    idx = np.arange(shape[axis])
    view = [1] * len(shape)
    view[axis] = shape[axis]
    return idx.reshape(view)


def support_plane_values(pair: ConjugatePair, Z: np.ndarray) -> np.ndarray:
    """Evaluate the discrete conjugate at arbitrary points via support planes.

    Each dual cell corner carries an exact subgradient (its maximizing primal
    node); the max of the corner planes <x*, z> - Phi(x*) is exact at the
    nodes, respects kinks, and never exceeds the true node-sup.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    g = pair.dual_grid
    n = g.n
    corner_idx = []
    for i in range(n):
        ax = g.axis(i)
        j = np.clip(np.searchsorted(ax, Z[:, i]) - 1, 0, len(ax) - 2)
        corner_idx.append(j)
    out = np.full(len(Z), -INF)
    for corner in range(2 ** n):
        sel = tuple(corner_idx[i] + ((corner >> i) & 1) for i in range(n))
        xs = pair.support_x[sel]          # (m, n)
        fs = pair.support_f[sel]
        val = np.einsum("ij,ij->i", xs, Z) - fs
        np.maximum(out, np.where(np.isfinite(fs), val, -INF), out=out)
    return out


def node_sup_values(pair: ConjugatePair, Z: np.ndarray, return_argmax: bool = False):
    """Near-exact Phi*_d off the grid: node-sup over the corner-argmax window.

    For convex data the maximizer at z lies in the index bounding box of the
    corner maximizers (the argmax moves monotonically across a cell); the sup
    over that box (padded one node) recovers the full node-sup.  Very wide
    boxes are argmax jumps across kinks, where the corner support planes are
    already exact, so they fall back to planes.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    g = pair.dual_grid
    n = g.n
    out = support_plane_values(pair, Z)
    corner_idx = []
    for i in range(n):
        ax = g.axis(i)
        corner_idx.append(np.clip(np.searchsorted(ax, Z[:, i]) - 1, 0, len(ax) - 2))
    lo = None
    hi = None
    arg = np.zeros((len(Z), n), dtype=np.intp) if return_argmax else None
    best_plane = np.full(len(Z), -INF)
    for corner in range(2 ** n):
        sel = tuple(corner_idx[i] + ((corner >> i) & 1) for i in range(n))
        ids = pair.support_idx[sel]       # (m, n)
        if return_argmax:
            xs = pair.support_x[sel]
            fs = pair.support_f[sel]
            val = np.einsum("ij,ij->i", xs, Z) - fs
            better = np.isfinite(fs) & (val > best_plane)
            best_plane = np.where(better, val, best_plane)
            arg[better] = ids[better]
        lo = ids.copy() if lo is None else np.minimum(lo, ids)
        hi = ids.copy() if hi is None else np.maximum(hi, ids)
    shape = pair.primal.grid.shape
    lo = np.maximum(lo - 1, 0)
    hi = np.minimum(hi + 1, np.asarray(shape) - 1)
    widths = (hi - lo + 1).max(axis=1)
    fx = pair.primal.values
    axes = pair.primal.grid.axes()
    prev = 0
    for cap in (6, 16, 48):
        ok = (widths > prev) & (widths <= cap)
        prev = cap
        if not ok.any():
            continue
        Zo, loo, hio = Z[ok], lo[ok], hi[ok]
        best = np.full(len(Zo), -INF)
        besti = np.zeros((len(Zo), n), dtype=np.intp)
        wmax = (hio - loo + 1).max(axis=0)
        for off in np.ndindex(*[int(w) for w in wmax]):
            sel = []
            valid = np.ones(len(Zo), dtype=bool)
            for i in range(n):
                j = loo[:, i] + off[i]
                valid &= j <= hio[:, i]
                sel.append(np.minimum(j, hio[:, i]))
            fv = fx[tuple(sel)]
            xv = np.stack([axes[i][sel[i]] for i in range(n)], axis=-1)
            cand = np.einsum("ij,ij->i", xv, Zo) - fv
            cand = np.where(valid & np.isfinite(fv), cand, -INF)
            if return_argmax:
                better = cand > best
                for i in range(n):
                    besti[better, i] = sel[i][better]
                best = np.where(better, cand, best)
            else:
                np.maximum(best, cand, out=best)
        gain = best > out[ok]
        sub = np.flatnonzero(ok)[gain]
        out[sub] = best[gain]
        if return_argmax:
            arg[sub] = besti[gain]
    if return_argmax:
        return out, arg
    return out


def radial_sup_values(pair: ConjugatePair, Z: np.ndarray, golden_iters: int = 30) -> np.ndarray:
    """Near-exact conjugate for declared p-homogeneous evaluator-backed Phi.

    With Phi(r u) = r^p Phi(u), sup_r (r <u,z> - r^p Phi(u)) is closed form,
    leaving a 1-D concave search over the direction; golden section around
    the node-sup argmax direction finishes the job (n <= 2).
    """
    p = pair.primal.homogeneity
    expr = pair.primal.evaluator
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    val, arg = node_sup_values(pair, Z, return_argmax=True)
    g = pair.primal.grid

    def radial_best(a, b):
        # sup_{r>=0} (a r - b r^p), zero when a <= 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            r = (np.maximum(a, 0.0) / (p * b)) ** (1.0 / (p - 1.0))
            out = a * r - b * r ** p
        return np.where((a > 0) & (b > 0) & np.isfinite(b), out, 0.0)

    if g.n == 1:
        u = np.ones((len(Z), 1))
        b = np.asarray(expr(u), dtype=float)
        best = np.maximum(radial_best(Z[:, 0], b), radial_best(-Z[:, 0], b))
        return np.maximum(val, best)
    if g.n != 2:
        return refined_sup_values(pair, Z, iters=2, _skip_radial=True)
    x0 = np.stack([g.axis(i)[arg[:, i]] for i in range(2)], axis=-1)
    r0 = np.linalg.norm(x0, axis=1)
    th0 = np.arctan2(x0[:, 1], x0[:, 0])
    span = 2.5 * max(g.spacings) / np.maximum(r0, min(g.spacings))
    lo, hi = th0 - span, th0 + span
    gr = (np.sqrt(5.0) - 1.0) / 2.0

    def F(th):
        u = np.stack([np.cos(th), np.sin(th)], axis=-1)
        a = np.einsum("ij,ij->i", u, Z)
        b = np.asarray(expr(u), dtype=float)
        return radial_best(a, b)

    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = F(c), F(d)
    for _ in range(golden_iters):
        swap = fc < fd          # maximize
        lo = np.where(swap, c, lo)
        hi = np.where(~swap, d, hi)
        c = hi - gr * (hi - lo)
        d = lo + gr * (hi - lo)
        fc, fd = F(c), F(d)
    return np.maximum(val, np.maximum(fc, fd))


def refined_sup_values(pair: ConjugatePair, Z: np.ndarray, iters: int = 2,
                       _skip_radial: bool = False) -> np.ndarray:
    """sup_x <x,z> - Phi(x) sharpened with the primal evaluator.

    Starting from the node-sup argmax, the sup is re-taken on local sub-grids
    of shrinking spacing around the maximizer.  This removes the O(h) bias of
    sampled kinks while remaining a lower bound on the true conjugate.
    Falls back to the plain node-sup when no evaluator is attached; declared
    homogeneous functions take the exact radial route instead.
    """
    if pair.primal.evaluator is None or iters <= 0:
        return node_sup_values(pair, Z)
    if pair.primal.homogeneity is not None and not _skip_radial:
        return radial_sup_values(pair, Z)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    val, arg = node_sup_values(pair, Z, return_argmax=True)
    g = pair.primal.grid
    n = g.n
    xc = np.stack([g.axis(i)[arg[:, i]] for i in range(n)], axis=-1)
    h = np.asarray(g.spacings)
    step = h.copy()
    offsets = np.array(list(np.ndindex(*([5] * n)))) - 2  # 5^n local stencil
    for _ in range(iters):
        cand_x = xc[:, None, :] + offsets[None, :, :] * (step / 2.0)
        m, k, _ = cand_x.shape
        fv = np.asarray(pair.primal.evaluator(cand_x.reshape(-1, n)),
                        dtype=float).reshape(m, k)
        cand = np.einsum("mkj,mj->mk", cand_x, Z) - fv
        cand = np.where(np.isfinite(fv), cand, -INF)
        best = np.argmax(cand, axis=1)
        improved = cand[np.arange(m), best] > val
        xc[improved] = cand_x[improved, best[improved]]
        val = np.maximum(val, cand[np.arange(m), best])
        step = step / 2.0
    return val


def fenchel_young_gap_raw(f: GridFunction, fstar: GridFunction, samples: int = 256,
                          seed: int = 0):
    """min over sampled node pairs (x, y) of f(x) + f*(y) - <x, y>."""
    rng = np.random.default_rng(seed)
    xm = np.argwhere(np.isfinite(f.values))
    ym = np.argwhere(np.isfinite(fstar.values))
    if len(xm) == 0 or len(ym) == 0:
        raise EmptyDomain("no finite nodes to sample")
    xi = xm[rng.integers(0, len(xm), samples)]
    yi = ym[rng.integers(0, len(ym), samples)]
    xpts = np.stack([f.grid.axis(i)[xi[:, i]] for i in range(f.grid.n)], axis=1)
    ypts = np.stack([fstar.grid.axis(i)[yi[:, i]] for i in range(f.grid.n)], axis=1)
    fx = f.values[tuple(xi.T)]
    gy = fstar.values[tuple(yi.T)]
    gaps = fx + gy - np.sum(xpts * ypts, axis=1)
    k = int(np.argmin(gaps))
    return float(gaps[k]), (xpts[k], ypts[k])


def fenchel_young_gap(pair: ConjugatePair, test_points=None, seed: int = 0):
    """Minimum Fenchel-Young gap over test points (given or sampled)."""
    if test_points is None:
        return fenchel_young_gap_raw(pair.primal, pair.dual, seed=seed)
    xs, ys = test_points
    fx = interpolate(pair.primal, xs)
    gy = interpolate(pair.dual, ys)
    gaps = fx + gy - np.sum(np.atleast_2d(xs) * np.atleast_2d(ys), axis=1)
    k = int(np.argmin(gaps))
    return float(gaps[k]), (np.atleast_2d(xs)[k], np.atleast_2d(ys)[k])


def involution_error(f: GridFunction) -> float:
    """max over interior nodes of |(f*)* - f| (conjugating back onto f's grid)."""
    pair = conjugate(f)
    back = conjugate(pair.dual, dual_grid=f.grid)
    inner = tuple(slice(1, -1) for _ in range(f.grid.n))
    a = back.dual.values[inner]
    b = f.values[inner]
    both = np.isfinite(a) & np.isfinite(b)
    if not both.any():
        return INF
    return float(np.abs(a[both] - b[both]).max())


def affine_covariance_check(f: GridFunction, A: np.ndarray, b: float) -> float:
    """Defect of (f(A.) + b)* = f*(A^{-T} .) - b on common dual nodes."""
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) < 1e-12:
        raise SingularMatrix("affine map is singular")
    if f.evaluator is None:
        raise ValueError("affine covariance check needs an evaluator-backed function")
    g_expr = lambda p: np.asarray(f.evaluator(p @ A.T), dtype=float) + b
    from .numgrid import build_grid_fn
    g = build_grid_fn(g_expr, f.grid)
    pair_g = conjugate(g)
    pair_f = conjugate(f)
    ypts = pair_g.dual_grid.points()
    mapped = ypts @ np.linalg.inv(A)
    # compare only where both duals sit inside their certified slope ranges
    live = np.ones(len(ypts), dtype=bool)
    for i in range(f.grid.n):
        live &= np.abs(ypts[:, i]) <= 0.5 * pair_g.dual_grid.half_widths[i]
        live &= np.abs(mapped[:, i]) <= 0.5 * pair_f.dual_grid.half_widths[i]
    if not live.any():
        return INF
    ref = node_sup_values(pair_f, mapped[live]) - b
    got = pair_g.dual.values.ravel()[live]
    ok = np.isfinite(ref) & np.isfinite(got)
    if not ok.any():
        return INF
    return float(np.abs(ref[ok] - got[ok]).max())


# ---------------------------------------------------------------------------
# smooth duality identities and the second-order expansion of the conjugate
# ---------------------------------------------------------------------------

def smooth_duality_check(V, pts: np.ndarray):
    """Max defects of the three smooth-duality identities at the given points.

    (1) V + V*(grad V) - <x, grad V>, (2) grad V(grad V*(x)) - x,
    (3) D^2 V*(grad V(x)) - (D^2 V)^{-1}(x); everything in closed form.
    """
    W = V.dual()
    pts = np.atleast_2d(pts)
    g = V.grad(pts)
    d1 = np.abs(V(pts) + W(g) - np.sum(pts * g, axis=-1)).max()
    d2 = np.abs(V.grad(W.grad(pts)) - pts).max()
    d3 = 0.0
    for x in pts:
        lhs = W.hess(V.grad(x))
        rhs = np.linalg.inv(V.hess(x))
        d3 = max(d3, float(np.abs(lhs - rhs).max()))
    return float(d1), float(d2), float(d3)


class PolynomialBump:
    """Compactly supported C^2 bump A (1 - |x/R|^2)^3 with analytic derivatives."""

    def __init__(self, amplitude: float = 1.0, radius: float = 1.0, n: int = 1):
        self.A, self.R, self.n = amplitude, radius, n

    def __call__(self, x):
        x = np.atleast_2d(x)
        u = np.sum((x / self.R) ** 2, axis=-1)
        return np.where(u < 1, self.A * (1 - np.minimum(u, 1)) ** 3, 0.0)

    def grad(self, x):
        x = np.atleast_2d(x)
        u = np.sum((x / self.R) ** 2, axis=-1, keepdims=True)
        inside = u < 1
        return np.where(inside, -6.0 * self.A * (1 - np.minimum(u, 1)) ** 2 * x / self.R ** 2, 0.0)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        u = float(np.sum((x / self.R) ** 2))
        n = x.size
        if u >= 1:
            return np.zeros((n, n))
        w = 1 - u
        outer = np.outer(x, x)
        return self.A * (24.0 * w * outer / self.R ** 4 - 6.0 * w ** 2 * np.eye(n) / self.R ** 2)


def _newton_conjugate(V, g, eps: float, y: np.ndarray, x0: np.ndarray) -> float:
    """(V + eps g)*(y) by Newton ascent on x -> <x,y> - V(x) - eps g(x)."""
    x = np.array(x0, dtype=float)
    for _ in range(60):
        grad = y - V.grad(x) - eps * g.grad(np.atleast_2d(x))[0]
        H = V.hess(x) + eps * g.hess(x)
        step = np.linalg.solve(H, grad)
        x = x + step
        if np.abs(step).max() < 1e-14 * max(1.0, np.abs(x).max()):
            break
    return float(np.dot(x, y) - V(x) - eps * g(np.atleast_2d(x))[0])


def perturbation_expansion_check(V, g, eps_list, sample_points: np.ndarray):
    """Residual of the second-order expansion of (V + eps g)* at each eps.

    The exact conjugate is computed by a Newton oracle, independent of the
    grid transform.  Evaluation points are y = grad V(x) for x in the support
    of g, per the expansion's validity region.  Returns [(eps, residual)].
    """
    W = V.dual()
    sample_points = np.atleast_2d(sample_points)
    ys = V.grad(sample_points)
    out = []
    for eps in eps_list:
        worst = 0.0
        for x, y in zip(sample_points, ys):
            exact = _newton_conjugate(V, g, eps, y, x)
            xb = W.grad(y)          # = x for exact duality
            gv = g(np.atleast_2d(xb))[0]
            dg = g.grad(np.atleast_2d(xb))[0]
            quad = W.hess(y) @ dg @ dg
            approx = W(y) - eps * gv + 0.5 * eps ** 2 * quad
            worst = max(worst, abs(exact - approx))
        out.append((float(eps), float(worst)))
    return out


def loglog_slope(pairs) -> float:
    e = np.array([p[0] for p in pairs])
    r = np.array([max(p[1], 1e-300) for p in pairs])
    return float(np.polyfit(np.log(e), np.log(r), 1)[0])
