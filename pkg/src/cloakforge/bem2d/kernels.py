"""Free-space Helmholtz kernels in two dimensions.

The outgoing fundamental solution under the exp(-i omega t) time
convention is G(x, y) = (i/4) H0(k |x - y|), with H0 the Hankel
function of the first kind. All helpers are vectorized; displacement
arguments are arrays d = x - y with the coordinate pair on the last
axis.
"""

from __future__ import annotations

import numpy as np
from scipy.special import j0, j1, y0, y1

EULER_GAMMA = 0.5772156649015328606


def hankel1_0(z):
    """H0 of the first kind for real z via the real Bessel pair.

    The real-argument j/y routines are several times faster than the
    complex-plane Hankel evaluation and agree to rounding.
    """
    return j0(z) + 1j * y0(z)


def hankel1_1(z):
    """H1 of the first kind for real z via the real Bessel pair."""
    return j1(z) + 1j * y1(z)


def green(k: float, r, order: int = 0):
    """Radial kernel value or its radial derivatives.

    Parameters
    ----------
    k : float
        Wavenumber, > 0.
    r : array_like
        Point separation distances, all > 0.
    order : {0, 1, 2}
        0 returns G(r), 1 returns dG/dr, 2 returns d2G/dr2.
    """
    if k <= 0:
        raise ValueError("wavenumber must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("singular evaluation")
    z = k * r
    if order == 0:
        return 0.25j * hankel1_0(z)
    if order == 1:
        return -0.25j * k * hankel1_1(z)
    if order == 2:
        # H1'(z) = H0(z) - H1(z)/z
        return -0.25j * k * k * (hankel1_0(z) - hankel1_1(z) / z)
    raise ValueError("order must be 0, 1, or 2")


def _split(d):
    d = np.asarray(d, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r <= 0):
        raise ValueError("singular evaluation")
    return d, r


def grad_green(k: float, d):
    """Gradient with respect to the observation point x, shape (..., 2)."""
    d, r = _split(d)
    gp = -0.25j * k * hankel1_1(k * r)
    return (gp / r)[..., None] * d


def normal_derivative_y(k: float, d, ny):
    """dG/dn_y, the double-layer kernel; d = x - y."""
    d, r = _split(d)
    return 0.25j * k * hankel1_1(k * r) * np.sum(np.asarray(ny) * d, axis=-1) / r


def normal_derivative_x(k: float, d, nx):
    """dG/dn_x, the adjoint double-layer kernel; d = x - y."""
    d, r = _split(d)
    return -0.25j * k * hankel1_1(k * r) * np.sum(np.asarray(nx) * d, axis=-1) / r


def tangential_derivative_x(k: float, d, tx):
    """dG/ds_x along the unit tangent tx at the observation point."""
    d, r = _split(d)
    return -0.25j * k * hankel1_1(k * r) * np.sum(np.asarray(tx) * d, axis=-1) / r


def grad_normal_derivative_y(k: float, d, ny):
    """Gradient in x of the double-layer kernel, shape (..., 2)."""
    d, r = _split(d)
    ny = np.asarray(ny, dtype=float)
    z = k * r
    h0 = hankel1_0(z)
    h1 = hankel1_1(z)
    gp = -0.25j * k * h1
    # G'' - G'/r, regular combination entering the cross term.
    gpp_m = -0.25j * k * k * h0 + 0.5j * k * h1 / r
    nyd = np.sum(ny * d, axis=-1)
    return (-(gpp_m * nyd) / (r * r))[..., None] * d - (gp / r)[..., None] * np.broadcast_to(ny, d.shape)


def second_normal_derivative(k: float, d, nx, ny):
    """d2G/dn_x dn_y pointwise (hypersingular kernel, off-diagonal use only)."""
    d, r = _split(d)
    nx = np.asarray(nx, dtype=float)
    ny = np.asarray(ny, dtype=float)
    z = k * r
    h0 = hankel1_0(z)
    h1 = hankel1_1(z)
    gp = -0.25j * k * h1
    gpp = -0.25j * k * k * (h0 - h1 / z)
    nxd = np.sum(nx * d, axis=-1)
    nyd = np.sum(ny * d, axis=-1)
    nxny = np.sum(np.broadcast_to(nx, d.shape) * np.broadcast_to(ny, d.shape), axis=-1)
    # n_x . grad_x (n_y . grad_y G) with G radial in |x - y|.
    return -(gpp - gp / r) * nxd * nyd / (r * r) - gp * nxny / r
