"""Element integrals of the layer kernels over straight elements.

Every system and field-evaluation matrix entry reduces to integrals of
the kernel families below over single elements, against constant or
linear nodal shape functions:

  g0, g1     : int G psi ds            (psi = 1 - t and t hat restrictions)
  d0, d1     : int dG/dn_y psi ds
  dstar      : int dG/dn_x ds
  t          : int dG/ds_x ds
  grads      : int grad_x G ds         (two components)
  gradd0/1   : int grad_x dG/dn_y psi ds

Rule selection per (point, element) pair: analytic log-split for the
element's own midpoint, a geometrically graded composite rule when the
point hovers within 0.75 element lengths, a doubled-order Gauss rule
inside two element lengths, and plain 8-point Gauss otherwise. The
hypersingular operator never appears here: it is assembled from t plus
g0/g1 after integration by parts along the closed loops.
"""

from __future__ import annotations

import numpy as np
from scipy.special import j0, y0

from .kernels import EULER_GAMMA, hankel1_0, hankel1_1
from .quadrature import gauss01, graded01, log_gauss01

SCALAR_FAMILIES = ("g0", "g1", "d0", "d1", "dstar", "t")
VECTOR_FAMILIES = ("grads", "gradd0", "gradd1")

_NEED_H0 = {"g0", "g1", "gradd0", "gradd1"}
_NEED_H1 = {"d0", "d1", "dstar", "t", "grads", "gradd0", "gradd1"}

REGULAR_ORDER = 8
NEAR_ORDER = 16
GRADED_FACTOR = 0.75
NEAR_FACTOR = 2.0


def point_segment_distance(points, p0, p1):
    """Exact distances (m, n) and projection parameters from points to segments."""
    points = np.asarray(points, dtype=float)
    v = p1 - p0
    vv = np.sum(v * v, axis=1)
    w = points[:, None, :] - p0[None, :, :]
    tr = np.einsum("mnk,nk->mn", w, v) / vv
    tc = np.clip(tr, 0.0, 1.0)
    diff = w - tc[..., None] * v[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)), tc


def endpoint_g_integrals(k: float, lengths):
    """(I0, I1) with I0 = int_0^L G(s) ds and I1 = int_0^L G(s) s ds.

    G(s) = (i/4) H0(ks) along a straight line from the singular point.
    The logarithmic part of the Hankel kernel splits off analytically;
    the log factor is integrated with the dedicated log-weighted rule
    and the remaining entire functions with plain Gauss. Vectorized
    over an array of interval lengths L > 0.
    """
    L = np.asarray(lengths, dtype=float)
    if np.any(L <= 0.0):
        raise ValueError("singular evaluation")
    u8, w8 = gauss01(NEAR_ORDER)
    ul, wl = log_gauss01(16)
    z8 = k * L[..., None] * u8
    j8 = j0(z8)
    glj0 = j8 @ w8
    glj1 = j8 @ (w8 * u8)
    zl = k * L[..., None] * ul
    jl = j0(zl)
    lgj0 = jl @ wl
    lgj1 = jl @ (wl * ul)
    yhat = y0(z8) - (2.0 / np.pi) * (np.log(0.5 * z8) + EULER_GAMMA) * j8
    yh0 = yhat @ w8
    yh1 = yhat @ (w8 * u8)
    c1 = 0.25j - (np.log(0.5 * k) + EULER_GAMMA) / (2.0 * np.pi)
    lnl = np.log(L)
    i0 = L * (c1 * glj0 - (lnl * glj0 - lgj0) / (2.0 * np.pi) - 0.25 * yh0)
    i1 = L * L * (c1 * glj1 - (lnl * glj1 - lgj1) / (2.0 * np.pi) - 0.25 * yh1)
    return i0, i1


def self_g_hats(k: float, lengths, params):
    """(g0, g1) hat-weighted element integrals of G from an on-element point.

    The point sits at arclength parameter t in (0, 1) of its own element
    (lengths h); g0 pairs with the 1-t hat, g1 with the t hat. Splitting
    at the point gives two endpoint-singular integrals handled by
    endpoint_g_integrals.
    """
    h = np.asarray(lengths, dtype=float)
    t = np.asarray(params, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise ValueError("singular evaluation")
    s = t * h
    i0l, i1l = endpoint_g_integrals(k, s)
    i0r, i1r = endpoint_g_integrals(k, h - s)
    total = i0l + i0r
    skew = (i1l - i1r) / h
    g0 = (1.0 - t) * total + skew
    g1 = t * total - skew
    return g0, g1


def self_g_integral(k: float, lengths):
    """int_e G(x_mid, y) ds_y on each element's own midpoint."""
    h = np.asarray(lengths, dtype=float)
    i0, _ = endpoint_g_integrals(k, 0.5 * h)
    return 2.0 * i0


def _eval_rule(k, xp, nxp, txp, p0, p1, ne, he, tq, wq, which):
    """Evaluate requested families for a pair list.

    All leading arrays have one row per (point, element) pair. tq/wq are
    either one shared rule (Q,) or per-pair rules (pairs, Q); padded
    rule slots must carry zero weight and a node inside (0, 1).
    """
    tq = np.atleast_2d(tq)
    wq = np.atleast_2d(wq)
    y = p0[:, None, :] + tq[..., None] * (p1 - p0)[:, None, :]
    d = xp[:, None, :] - y
    r = np.sqrt(np.sum(d * d, axis=-1))
    z = k * r
    need_h0 = bool(_NEED_H0 & set(which))
    need_h1 = bool(_NEED_H1 & set(which))
    h0 = hankel1_0(z) if need_h0 else None
    h1 = hankel1_1(z) if need_h1 else None
    w = wq * he[:, None]
    out = {}
    if "g0" in which or "g1" in which:
        g = 0.25j * h0
        if "g0" in which:
            out["g0"] = (g * (1.0 - tq) * w).sum(axis=1)
        if "g1" in which:
            out["g1"] = (g * tq * w).sum(axis=1)
    if need_h1:
        b_over_r = -0.25j * k * h1 / r  # G'(r)/r
    if "d0" in which or "d1" in which or "gradd0" in which or "gradd1" in which:
        nyd = np.einsum("pk,pqk->pq", ne, d)
    if "d0" in which or "d1" in which:
        dk = -b_over_r * nyd
        if "d0" in which:
            out["d0"] = (dk * (1.0 - tq) * w).sum(axis=1)
        if "d1" in which:
            out["d1"] = (dk * tq * w).sum(axis=1)
    if "dstar" in which:
        nxd = np.einsum("pk,pqk->pq", nxp, d)
        out["dstar"] = (b_over_r * nxd * w).sum(axis=1)
    if "t" in which:
        txd = np.einsum("pk,pqk->pq", txp, d)
        out["t"] = (b_over_r * txd * w).sum(axis=1)
    if "grads" in which:
        out["grads"] = np.einsum("pq,pqk->pk", b_over_r * w, d)
    if "gradd0" in which or "gradd1" in which:
        # grad_x dG/dn_y = -(G'' - G'/r) (n_y.d) d / r^2 - G'(r) n_y / r
        a_m = -0.25j * k * k * h0 + 0.5j * k * h1 / r
        vec = (-(a_m * nyd) / (r * r))[..., None] * d - b_over_r[..., None] * ne[:, None, :]
        if "gradd0" in which:
            out["gradd0"] = np.einsum("pq,pqk->pk", (1.0 - tq) * w, vec)
        if "gradd1" in which:
            out["gradd1"] = np.einsum("pq,pqk->pk", tq * w, vec)
    return out


def element_integrals(k, mesh, cols, points, which, nx=None, tx=None, point_elem=None):
    """Requested integral families for every (point, column-element) pair.

    Parameters
    ----------
    k : float
        Wavenumber of the medium the kernel lives in.
    mesh : BoundaryMesh
    cols : int array
        Global element indices forming the columns.
    points : (m, 2) array
        Evaluation or collocation points.
    which : sequence of family names
    nx, tx : (m, 2) arrays, optional
        Unit normal/tangent at the points; required for dstar / t.
    point_elem : (m,) int array, optional
        Global element id whose midpoint each point is, or -1. Enables
        the analytic self-term path.

    Returns
    -------
    dict mapping family name to (m, n) complex arrays, (m, n, 2) for
    gradient families.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    cols = np.asarray(cols, dtype=np.int64).reshape(-1)
    m, n = len(points), len(cols)
    which = tuple(which)
    for f in which:
        if f not in SCALAR_FAMILIES and f not in VECTOR_FAMILIES:
            raise ValueError(f"unknown integral family {f!r}")
    out = {
        f: np.zeros((m, n) + ((2,) if f in VECTOR_FAMILIES else ()), dtype=complex)
        for f in which
    }
    if m == 0 or n == 0:
        return out

    segs = mesh.segments[cols]
    p0 = mesh.nodes[segs[:, 0]]
    p1 = mesh.nodes[segs[:, 1]]
    ne = mesh.normals[cols]
    he = mesh.lengths[cols]
    if nx is not None:
        nx = np.asarray(nx, dtype=float).reshape(-1, 2)
    if tx is not None:
        tx = np.asarray(tx, dtype=float).reshape(-1, 2)
    if point_elem is not None:
        point_elem = np.asarray(point_elem, dtype=np.int64).reshape(-1)

    row_step = max(1, int(4_000_000 // n))
    for lo in range(0, m, row_step):
        hi = min(m, lo + row_step)
        _fill_chunk(
            k, mesh, out, which, lo,
            points[lo:hi],
            None if nx is None else nx[lo:hi],
            None if tx is None else tx[lo:hi],
            None if point_elem is None else point_elem[lo:hi],
            cols, p0, p1, ne, he,
        )
    return out


def _scatter(out, which, rows, cols_pos, vals):
    for f in which:
        out[f][rows, cols_pos] = vals[f]


def _fill_chunk(k, mesh, out, which, row0, pts, nx, tx, pelem, cols, p0, p1, ne, he):
    dist, tproj = point_segment_distance(pts, p0, p1)
    if pelem is not None:
        self_mask = (pelem[:, None] == cols[None, :]) & (pelem[:, None] >= 0)
    else:
        self_mask = np.zeros(dist.shape, dtype=bool)
    graded_mask = (dist <= GRADED_FACTOR * he[None, :]) & ~self_mask
    near_mask = (dist < NEAR_FACTOR * he[None, :]) & ~graded_mask & ~self_mask
    regular_mask = ~(self_mask | graded_mask | near_mask)

    for mask, order in ((regular_mask, REGULAR_ORDER), (near_mask, NEAR_ORDER)):
        ii, jj = np.nonzero(mask)
        if len(ii) == 0:
            continue
        tq, wq = gauss01(order)
        vals = _eval_rule(
            k, pts[ii],
            None if nx is None else nx[ii],
            None if tx is None else tx[ii],
            p0[jj], p1[jj], ne[jj], he[jj], tq, wq, which,
        )
        _scatter(out, which, row0 + ii, jj, vals)

    ii, jj = np.nonzero(graded_mask)
    if len(ii):
        # per-pair graded rules, padded to a common length and evaluated
        # as one batch; padding carries zero weight
        rules = [graded01(t) for t in tproj[ii, jj]]
        width = max(len(t) for t, _ in rules)
        step = max(16, int(1_500_000 // width))
        for lo in range(0, len(ii), step):
            hi = min(len(ii), lo + step)
            TQ = np.full((hi - lo, width), 0.5)
            WQ = np.zeros((hi - lo, width))
            for p in range(lo, hi):
                tr, wr = rules[p]
                TQ[p - lo, :len(tr)] = tr
                WQ[p - lo, :len(wr)] = wr
            ig, jg = ii[lo:hi], jj[lo:hi]
            vals = _eval_rule(
                k, pts[ig],
                None if nx is None else nx[ig],
                None if tx is None else tx[ig],
                p0[jg], p1[jg], ne[jg], he[jg], TQ, WQ, which,
            )
            _scatter(out, which, row0 + ig, jg, vals)

    ii, jj = np.nonzero(self_mask)
    if len(ii):
        if any(f in VECTOR_FAMILIES for f in which):
            raise ValueError("singular evaluation")
        if "g0" in which or "g1" in which:
            g0, g1 = self_g_hats(k, he[jj], tproj[ii, jj])
            if "g0" in which:
                out["g0"][row0 + ii, jj] = g0
            if "g1" in which:
                out["g1"][row0 + ii, jj] = g1
        if "t" in which:
            # PV of the odd kernel over the own element:
            # -(i/4) (H0(k(h-s)) - H0(ks)) at arclength s from the start.
            s = tproj[ii, jj] * he[jj]
            out["t"][row0 + ii, jj] = -0.25j * (
                hankel1_0(k * (he[jj] - s)) - hankel1_0(k * s))
        # d0/d1/dstar vanish for a point on its own flat element:
        # (n . d) = 0 identically there.


def element_integral(kind, k, mesh, elem, point, nx=None, tx=None, is_self=False):
    """Scalar convenience wrapper for a single (point, element) integral.

    kind: one of 's' (constant single layer), 'd0', 'd1', 'dstar', 't',
    'g0', 'g1', 'grads', 'gradd0', 'gradd1'.
    """
    fam = ("g0", "g1") if kind == "s" else (kind,)
    res = element_integrals(
        k, mesh, np.array([elem]), np.asarray(point, dtype=float).reshape(1, 2),
        fam,
        nx=None if nx is None else np.asarray(nx).reshape(1, 2),
        tx=None if tx is None else np.asarray(tx).reshape(1, 2),
        point_elem=np.array([elem if is_self else -1]),
    )
    if kind == "s":
        return complex(res["g0"][0, 0] + res["g1"][0, 0])
    v = res[kind][0, 0]
    return v if kind in VECTOR_FAMILIES else complex(v)
