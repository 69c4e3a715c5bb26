"""Shared fixtures: simple geometries, kernel evaluators, quad oracles."""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.special import hankel1


def circle_segments(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    """Closed polygon of n segments approximating a circle, shape (n, 2, 2)."""
    t = np.linspace(0.0, 2.0 * np.pi, n + 1)
    pts = np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)
    return np.stack([pts[:-1], pts[1:]], axis=1)


def line_segments(n: int, length: float = 1.0) -> np.ndarray:
    x = np.linspace(0.0, length, n + 1)
    pts = np.stack([x, np.zeros_like(x)], axis=1)
    return np.stack([pts[:-1], pts[1:]], axis=1)


def seg_quad(f, p0, p1, singular_t=None):
    """Complex adaptive integral of f(y) over a straight segment, ds measure."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    h = np.linalg.norm(p1 - p0)
    pts = [singular_t] if singular_t is not None else None

    def at(t):
        return f(p0 + t * (p1 - p0))

    re = quad(lambda t: at(t).real, 0.0, 1.0, points=pts, limit=300)[0]
    im = quad(lambda t: at(t).imag, 0.0, 1.0, points=pts, limit=300)[0]
    return (re + 1j * im) * h


def helmholtz_entry(points: np.ndarray, k: float, shift: complex = 0.0):
    """Entry evaluator (i/4) H0^(1)(k |x_i - x_j|) with an optional diagonal shift.

    Diagonal entries (zero distance) take the shift value alone, which keeps
    synthetic test matrices finite and well conditioned.
    """
    pts = np.asarray(points, dtype=float)

    def entry(I, J):
        d = pts[np.asarray(I)][:, None, :] - pts[np.asarray(J)][None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        out = np.zeros(r.shape, dtype=complex)
        mask = r > 0
        out[mask] = 0.25j * hankel1(0, k * r[mask])
        out[~mask] = shift
        return out

    return entry
