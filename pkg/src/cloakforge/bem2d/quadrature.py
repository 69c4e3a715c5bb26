"""Quadrature rules on the reference interval [0, 1].

Three rules cover every integral in the element assembly: plain
Gauss-Legendre for regular interactions, a log-weighted Gauss rule for
the singular self terms, and a composite geometrically graded rule for
collocation points hovering near an element.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss01(n: int):
    """n-point Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def log_gauss01(n: int = 16):
    """Gauss rule for the weight ln(1/u) on (0, 1].

    Returns nodes u_i and weights w_i with
    sum_i w_i f(u_i) ~ int_0^1 f(u) ln(1/u) du, exact for polynomial f
    up to degree 2n - 1. Built by the modified Chebyshev algorithm from
    modified moments against monic shifted Legendre polynomials,
    followed by Golub-Welsch.
    """
    m = 2 * n
    # Monic shifted-Legendre recurrence on [0, 1]:
    # p_{l+1} = (u - 1/2) p_l - b_l p_{l-1}
    a = np.full(m, 0.5)
    b = np.zeros(m)
    ls = np.arange(1, m, dtype=float)
    b[1:] = ls * ls / (4.0 * (4.0 * ls * ls - 1.0))
    # Modified moments of ln(1/u): nu_0 = 1 and
    # nu_l = (-1)^l (l!)^2 / (l (l+1) (2l)!) for l >= 1.
    nu = np.zeros(m)
    nu[0] = 1.0
    c = 1.0  # (l!)^2 / (2l)!
    for l in range(1, m):
        c *= l / (2.0 * (2.0 * l - 1.0))
        nu[l] = ((-1.0) ** l) * c / (l * (l + 1.0))

    alpha = np.zeros(n)
    beta = np.zeros(n)
    sig_prev = np.zeros(m)
    sig_cur = nu.copy()
    alpha[0] = a[0] + nu[1] / nu[0]
    beta[0] = nu[0]
    for kk in range(1, n):
        sig_new = np.zeros(m)
        for l in range(kk, 2 * n - kk):
            sig_new[l] = (
                sig_cur[l + 1] if l + 1 < m else 0.0
            ) - (alpha[kk - 1] - a[l]) * sig_cur[l] - beta[kk - 1] * sig_prev[l] + b[l] * sig_cur[l - 1]
        alpha[kk] = a[kk] + sig_new[kk + 1] / sig_new[kk] - sig_cur[kk] / sig_cur[kk - 1]
        beta[kk] = sig_new[kk] / sig_cur[kk - 1]
        sig_prev, sig_cur = sig_cur, sig_new

    jac = np.diag(alpha) + np.diag(np.sqrt(beta[1:]), 1) + np.diag(np.sqrt(beta[1:]), -1)
    x, vec = np.linalg.eigh(jac)
    w = beta[0] * vec[0] ** 2
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=8192)
def graded01(t_star: float, levels: int = 4, n: int = 8, ratio: float = 0.25):
    """Composite Gauss rule on [0, 1] refined geometrically toward t_star.

    Panel widths shrink by `ratio` toward the accumulation point; each
    panel carries an n-point Gauss-Legendre rule. Used when an external
    collocation point sits close to the element (its projection
    parameter is t_star). Cached, so callers must not mutate the arrays.
    """
    t_star = min(1.0, max(0.0, float(t_star)))
    xg, wg = gauss01(n)
    nodes = []
    weights = []
    for lo, hi, toward_lo in ((t_star, 1.0, True), (0.0, t_star, False)):
        width = hi - lo
        if width <= 0.0:
            continue
        # Panel edges accumulate at the t_star end of [lo, hi].
        edges = [width * ratio ** i for i in range(levels, 0, -1)]
        edges = [0.0] + edges + [width]
        for e0, e1 in zip(edges[:-1], edges[1:]):
            if toward_lo:
                a, bnd = lo + e0, lo + e1
            else:
                a, bnd = hi - e1, hi - e0
            nodes.append(a + (bnd - a) * xg)
            weights.append((bnd - a) * wg)
    order = np.argsort(np.concatenate(nodes))
    x = np.concatenate(nodes)[order]
    w = np.concatenate(weights)[order]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
