"""Analytic plane-wave scattering by a circular cylinder.

Partial-wave series for the total field, used as the reference the
boundary-element solutions are validated against. The cylinder is
centered at the origin; shift probe coordinates for other centers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import h1vp, hankel1, jv, jvp

from .media import Medium

_TAIL = 1e-12
_MAX_TERMS = 500


def _normalize(media):
    if isinstance(media, Medium):
        return media, None
    media = tuple(media)
    return (media[0], None) if len(media) == 1 else (media[0], media[1])


def _coefficients(kind, n, radius, outer, inner):
    """Exterior scattering a_n and interior transmission b_n for order n."""
    k1 = outer.k
    z1 = k1 * radius
    if kind == "pec":
        return -jv(n, z1) / hankel1(n, z1), 0.0 + 0.0j
    k2, mu1, mu2 = inner.k, outer.mu, inner.mu
    z2 = k2 * radius
    # continuity of u and (1/mu) du/dr at r = radius:
    #   J_n(z1) + a H_n(z1) = b J_n(z2)
    #   (k1/mu1)(J'_n(z1) + a H'_n(z1)) = (k2/mu2) b J'_n(z2)
    p = k1 / mu1
    q = k2 / mu2
    A = np.array([[hankel1(n, z1), -jv(n, z2)],
                  [p * h1vp(n, z1), -q * jvp(n, z2)]], dtype=complex)
    rhs = np.array([-jv(n, z1), -p * jvp(n, z1)], dtype=complex)
    a, b = np.linalg.solve(A, rhs)
    return a, b


def mie_reference(kind, radius, media, probe_points, series_terms=None,
                  direction=(1.0, 0.0)):
    """Total field of a plane wave scattered by a circular cylinder.

    kind 'pec' (sound-soft, u = 0 on the circle) or 'dielectric'
    (transmission conditions). Points inside the circle get the
    interior field: zero for PEC, the transmitted series otherwise.
    Truncation is automatic until the tail drops below 1e-12 unless
    series_terms pins the order; a non-decaying tail raises.
    """
    kind = kind.lower()
    if kind not in ("pec", "dielectric"):
        raise ValueError(f"unknown kind {kind!r}")
    outer, inner = _normalize(media)
    if kind == "dielectric" and inner is None:
        raise ValueError("dielectric reference needs an interior medium")
    d = np.asarray(direction, dtype=float).reshape(2)
    d = d / np.sqrt(d @ d)
    pts = np.asarray(probe_points, dtype=float).reshape(-1, 2)
    r = np.sqrt(np.sum(pts * pts, axis=1))
    theta = np.arctan2(pts[:, 1], pts[:, 0]) - np.arctan2(d[1], d[0])
    inside = r < radius
    k1 = outer.k

    u = np.zeros(len(pts), dtype=complex)
    n_terms = _MAX_TERMS if series_terms is None else int(series_terms)
    converged = False
    tail = np.inf
    for n in range(n_terms + 1):
        a_n, b_n = _coefficients(kind, n, radius, outer, inner)
        fold = np.where(n == 0, 1.0, 2.0 * np.cos(n * theta))
        term = np.zeros(len(pts), dtype=complex)
        out = ~inside
        term[out] = (jv(n, k1 * r[out]) + a_n * hankel1(n, k1 * r[out]))
        if kind == "dielectric" and np.any(inside):
            term[inside] = b_n * jv(n, inner.k * r[inside])
        term = (1j ** n) * fold * term
        u += term
        tail = np.max(np.abs(term)) if len(term) else 0.0
        scale = max(1.0, float(np.max(np.abs(u)))) if len(u) else 1.0
        if n >= 2 and tail < _TAIL * scale:
            converged = True
            break
    if not converged:
        raise ValueError(
            f"series not converged after {n_terms} terms (tail {tail:.2e})")
    return u
