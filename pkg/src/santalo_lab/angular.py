"""Quadrature helpers for weights with axis singularities.

The recurring pattern is int F(theta) |cos(theta) sin(theta)|^a dtheta on the
circle with a > -1: substituting u = 2 theta per quadrant and mapping to
Gauss-Jacobi nodes with weight (1-t)^a (1+t)^a makes the singular factor
exact, so only the smooth part of F limits accuracy.
"""
from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi


def halfperiod_sine_nodes(a: float, n_quad: int):
    """Nodes/weights with int_0^pi G(u) (sin u)^a du = sum w_i G(u_i)."""
    t, w = roots_jacobi(n_quad, a, a)
    u = np.pi * (t + 1.0) / 2.0
    S = np.cos(np.pi * t / 2.0) / ((1.0 - t) * (1.0 + t))
    return u, (np.pi / 2.0) * w * S ** a


def circle_product_weight_nodes(a: float, n_quad: int):
    """Nodes/weights with int_0^{2pi} F(th) |cos th sin th|^a dth = sum w F(th)."""
    u, wu = halfperiod_sine_nodes(a, n_quad)
    thetas, weights = [], []
    for j in range(4):
        thetas.append(u / 2.0 + j * np.pi / 2.0)
        weights.append(2.0 ** (-a - 1.0) * wu)
    return np.concatenate(thetas), np.concatenate(weights)


def radial_power_nodes(m: float, n_quad: int):
    """Nodes/weights with int_0^1 F(s) s^m ds = sum w_i F(s_i) (m > -1)."""
    t, w = roots_jacobi(n_quad, 0.0, m)
    s = (t + 1.0) / 2.0
    return s, 2.0 ** (-m - 1.0) * w


def segment_power_nodes(n_quad: int, kappa_left: float = 0.0, kappa_right: float = 0.0):
    """Nodes/weights with int_0^1 F(v) v^kl (1-v)^kr dv = sum w_i F(v_i)."""
    t, w = roots_jacobi(n_quad, kappa_right, kappa_left)
    v = (t + 1.0) / 2.0
    return v, w * 2.0 ** (-kappa_left - kappa_right - 1.0)


def sine_power_integral(c: float) -> float:
    """int_0^pi (sin u)^c du = sqrt(pi) Gamma((c+1)/2) / Gamma(c/2 + 1)."""
    from scipy.special import gammaln
    return float(np.sqrt(np.pi) * np.exp(gammaln((c + 1.0) / 2.0) - gammaln(c / 2.0 + 1.0)))
