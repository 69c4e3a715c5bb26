"""Incident fields and interior field or gradient evaluation.

Domain representations (normals point from the exterior into the
scatterer):

  exterior   u = u_inc + mu1 (S1 w_p + S1 w_d) - D1 u_d
  interior   u = D2 u_d - mu2 S2 w_d

Values come out as one matrix-vector contraction per kernel family;
the dense backend streams the matrices in point chunks and never
stores the full evaluation operator, the hmatrix backend compresses
it once so repeated applications (forward and adjoint fields on one
lattice) cost two matvecs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hmat import aca_approximate, assemble_hmatrix, build_cluster_tree
from .kernels import hankel1_0, hankel1_1
from .media import Medium
from .mesh import BoundaryMesh
from .operators import element_integrals, point_segment_distance
from .system import DofLayout, footprint_segments

_CHUNK_SCALARS = 2_000_000


def incident_plane(x, direction, k1):
    """Plane wave exp(i k1 d.x) and its gradient at the given points."""
    d = np.asarray(direction, dtype=float).reshape(2)
    if abs(float(d @ d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    u = np.exp(1j * k1 * (x @ d))
    grad = 1j * k1 * d[None, :] * u[:, None]
    return u, grad


def plane_wave(k1, direction=(1.0, 0.0)):
    """Callable points -> (values, gradients) for a unit plane wave."""
    d = np.asarray(direction, dtype=float).reshape(2)
    if abs(float(d @ d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")

    def field(points):
        return incident_plane(points, d, k1)

    return field


def adjoint_incident(targets, obs_points, weights, k1, backend="dense",
                     grad=False, tol=1e-8):
    """Sum of weighted free-space sources: sum_m G(x, x_m) weight_m.

    backend 'dense' evaluates the kernel matrix in row chunks; 'aca'
    compresses it first (useful for well-separated target and source
    sets). Gradients are dense-only.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    obs = np.asarray(obs_points, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=complex).reshape(-1)
    if len(w) != len(obs):
        raise ValueError("one weight per observation point required")
    m, n = len(targets), len(obs)
    if backend not in ("dense", "aca"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "aca" and grad:
        raise ValueError("gradient evaluation requires the dense backend")

    def block(rows, cols):
        d = targets[rows][:, None, :] - obs[cols][None, :, :]
        r = np.sqrt(np.sum(d * d, axis=-1))
        if np.any(r == 0.0):
            raise ValueError("singular source evaluation")
        return 0.25j * hankel1_0(k1 * r), d, r

    if backend == "aca":
        def entry(rows, cols):
            return block(np.asarray(rows), np.asarray(cols))[0]

        res = aca_approximate(entry, np.arange(m), np.arange(n), tol)
        return res.U @ (res.V.conj().T @ w)

    vals = np.empty(m, dtype=complex)
    grads = np.empty((m, 2), dtype=complex) if grad else None
    step = max(1, _CHUNK_SCALARS // max(1, n))
    rows_all = np.arange(m)
    for lo in range(0, m, step):
        rows = rows_all[lo:lo + step]
        g, d, r = block(rows, np.arange(n))
        vals[rows] = g @ w
        if grad:
            gk = (-0.25j * k1 * hankel1_1(k1 * r) / r)[..., None] * d
            grads[rows] = np.einsum("mnk,n->mk", gk, w)
    return (vals, grads) if grad else vals


@dataclass(frozen=True)
class FieldEval:
    """Evaluated field samples with the near-boundary warning flags."""

    values: np.ndarray
    gradients: np.ndarray | None
    near: np.ndarray


def _domain_code(domain) -> int:
    key = str(domain).lower()
    if key in ("1", "omega1", "exterior"):
        return 1
    if key in ("2", "omega2", "interior"):
        return 2
    raise ValueError(f"unknown domain {domain!r}")


def _normalize(media):
    if isinstance(media, Medium):
        return media, None
    media = tuple(media)
    return (media[0], None) if len(media) == 1 else (media[0], media[1])


def near_boundary_flags(mesh: BoundaryMesh, points, factor: float = 0.5):
    """True where a point sits within factor * element length of the mesh."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    segs = mesh.segment_endpoints()
    flags = np.zeros(len(points), dtype=bool)
    step = max(1, _CHUNK_SCALARS // max(1, mesh.n_segments))
    for lo in range(0, len(points), step):
        dist, _ = point_segment_distance(points[lo:lo + step],
                                         segs[:, 0], segs[:, 1])
        flags[lo:lo + step] = np.any(dist < factor * mesh.lengths[None, :],
                                     axis=1)
    return flags


class _FieldEntryEvaluator:
    """Entry evaluator mapping system DOF columns to field values at points.

    The column layout matches the boundary system, so applying the
    compressed operator to a raw solution vector yields the scattered
    (exterior) or total layer (interior) field directly.
    """

    def __init__(self, mesh, layout, outer, inner, points, domain):
        self.mesh = mesh
        self.layout = layout
        self.points = points
        self.domain = domain
        self.k1 = outer.k
        self.mu1 = outer.mu
        self.k2 = None if inner is None else inner.k
        self.mu2 = None if inner is None else inner.mu

    def __call__(self, I, J):  # noqa: E741
        I = np.asarray(I, dtype=np.int64).reshape(-1)
        J = np.asarray(J, dtype=np.int64).reshape(-1)
        lay = self.layout
        pts = self.points[I]
        out = np.zeros((len(I), len(J)), dtype=complex)
        bounds = (0, lay.n_p, lay.n_p + lay.n_d, lay.size)
        for cf in range(3):
            cpos = np.flatnonzero((J >= bounds[cf]) & (J < bounds[cf + 1]))
            if len(cpos) == 0:
                continue
            cloc = J[cpos] - bounds[cf]
            out[:, cpos] = self._block(cf, pts, cloc)
        return out

    def _block(self, cf, pts, cloc):
        lay, mesh = self.layout, self.mesh
        ext = self.domain == 1
        if cf == 0:
            if not ext:
                return np.zeros((len(pts), len(cloc)), dtype=complex)
            r = element_integrals(self.k1, mesh, lay.pec_elems[cloc], pts,
                                  ("g0", "g1"))
            return self.mu1 * (r["g0"] + r["g1"])
        if cf == 1:
            k = self.k1 if ext else self.k2
            c0 = lay.diel_elems[cloc]
            c1 = lay.diel_elems[lay.prev_local[cloc]]
            d0 = element_integrals(k, mesh, c0, pts, ("d0",))["d0"]
            d1 = element_integrals(k, mesh, c1, pts, ("d1",))["d1"]
            return -(d0 + d1) if ext else (d0 + d1)
        k = self.k1 if ext else self.k2
        mu = self.mu1 if ext else self.mu2
        r = element_integrals(k, mesh, lay.diel_elems[cloc], pts, ("g0", "g1"))
        s = r["g0"] + r["g1"]
        return mu * s if ext else -mu * s


def field_operator(mesh, media, points, domain="omega1", *, eta=128.0,
                   n_min=128, tol=1e-5, workers=1):
    """Compressed evaluation operator: (values at points) = H @ solution.

    Row clusters are the points themselves, columns the system DOFs;
    the same operator then serves every solve on this mesh (forward and
    adjoint alike) at one matvec each.
    """
    outer, inner = _normalize(media)
    dom = _domain_code(domain)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    layout = DofLayout.from_mesh(mesh)
    if dom == 2 and layout.n_d == 0:
        raise ValueError("interior evaluation needs interface elements")
    row_segs = np.repeat(points[:, None, :], 2, axis=1)
    row_tree = build_cluster_tree(row_segs, n_min)
    col_tree = build_cluster_tree(footprint_segments(mesh, layout), n_min)
    entry = _FieldEntryEvaluator(mesh, layout, outer, inner, points, dom)
    return assemble_hmatrix(entry, row_tree, col_tree, eta=eta, tol=tol,
                            workers=workers)


def eval_field(solution, mesh, media, points, which="value",
               domain="omega1", incident=None, backend="dense",
               operator=None):
    """Field (and optionally gradient) samples at interior points.

    The caller guarantees the points lie in the claimed domain. In the
    exterior, `incident` (points -> (values, gradients)) adds the
    incident contribution; None returns the pure layer field. Points
    within half an element length of the boundary are flagged near.
    backend 'hmatrix' accepts a prebuilt `operator` from field_operator
    to amortize compression over many solves; gradients are dense-only.
    """
    outer, inner = _normalize(media)
    dom = _domain_code(domain)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    layout = DofLayout.from_mesh(mesh)
    if dom == 2 and layout.n_d == 0:
        raise ValueError("interior evaluation needs interface elements")
    want_grad = which in ("gradient", "both")
    want_val = which in ("value", "both")
    if which not in ("value", "gradient", "both"):
        raise ValueError(f"unknown which {which!r}")

    near = near_boundary_flags(mesh, points)

    if backend == "hmatrix":
        if want_grad:
            raise ValueError("gradient evaluation requires the dense backend")
        op = operator if operator is not None else field_operator(
            mesh, media, points, domain=dom)
        vals = op.matvec(solution.vector)
        if dom == 1 and incident is not None:
            vals = vals + np.asarray(incident(points)[0], dtype=complex)
        return FieldEval(values=vals, gradients=None, near=near)
    if backend != "dense":
        raise ValueError(f"unknown backend {backend!r}")

    k = outer.k if dom == 1 else inner.k
    mu = outer.mu if dom == 1 else inner.mu
    sgn = 1.0 if dom == 1 else -1.0  # S enters with +mu1 outside, -mu2 inside

    vals = np.zeros(len(points), dtype=complex) if want_val else None
    grads = np.zeros((len(points), 2), dtype=complex) if want_grad else None
    n_cols = max(1, layout.n_p + layout.n_d)
    step = max(1, _CHUNK_SCALARS // n_cols)

    c0 = layout.diel_elems
    c1 = layout.diel_elems[layout.prev_local]
    for lo in range(0, len(points), step):
        pts = points[lo:lo + step]
        sl = slice(lo, lo + len(pts))
        if dom == 1 and layout.n_p:
            fam = ("g0", "g1", "grads") if want_grad else ("g0", "g1")
            r = element_integrals(k, mesh, layout.pec_elems, pts, fam)
            if want_val:
                vals[sl] += mu * (r["g0"] + r["g1"]) @ solution.w_p
            if want_grad:
                grads[sl] += mu * np.einsum("mnk,n->mk", r["grads"],
                                            solution.w_p)
        if layout.n_d:
            fam = ["g0", "g1", "d0"]
            if want_grad:
                fam += ["grads", "gradd0"]
            r = element_integrals(k, mesh, c0, pts, fam)
            fam1 = ("d1", "gradd1") if want_grad else ("d1",)
            r1 = element_integrals(k, mesh, c1, pts, fam1)
            if want_val:
                vals[sl] += sgn * mu * (r["g0"] + r["g1"]) @ solution.w_d
                vals[sl] -= sgn * (r["d0"] + r1["d1"]) @ solution.u_d
            if want_grad:
                grads[sl] += sgn * mu * np.einsum(
                    "mnk,n->mk", r["grads"], solution.w_d)
                grads[sl] -= sgn * np.einsum(
                    "mnk,n->mk", r["gradd0"] + r1["gradd1"], solution.u_d)
    if dom == 1 and incident is not None:
        ui, gi = incident(points)
        if want_val:
            vals += np.asarray(ui, dtype=complex)
        if want_grad:
            grads += np.asarray(gi, dtype=complex)
    return FieldEval(values=vals, gradients=grads, near=near)
