"""Objective functionals, adjoint sources, and topological derivatives.

The adjoint problem reuses the forward system matrix: its incident
field is a superposition of outgoing line sources at the observation
points, weighted by the u-derivative of the objective, and it obeys the
same boundary conditions. The sensitivity of the objective to placing
an infinitesimal dielectric disc at x is

    T(x) = Re[omega^2 * (eps2 - eps1) * u(x) * u_adj(x)]

with the plain (unconjugated) product of the forward and adjoint total
fields. Derivative weights follow the convention dJ = Re[w * du], so
w = 2 * conj(residual) for the quadratic mismatch terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .bem2d import (
    adjoint_incident,
    eval_field,
    field_operator,
    near_boundary_flags,
)
from .bem2d.mesh import PEC
from .levelset import OMEGA1, OMEGA2, TDField, classify

_CHUNK_POINTS = 2048


@dataclass(frozen=True)
class ObjectiveSpec:
    """Observation layout of the cloaking objective.

    conventional: J = sum |u - u_inc|^2 over the outer points.
    modified: adds sum |u|^2 over the inner (quiet zone) points.
    """

    variant: str
    outer_points: np.ndarray
    inner_points: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("conventional", "modified"):
            raise ValueError("unknown objective variant")
        outer = np.ascontiguousarray(self.outer_points, dtype=float).reshape(-1, 2)
        if len(outer) == 0:
            raise ValueError("at least one outer observation point is required")
        object.__setattr__(self, "outer_points", outer)
        if self.variant == "modified":
            if self.inner_points is None:
                raise ValueError("modified objective needs inner observation points")
            inner = np.ascontiguousarray(self.inner_points, dtype=float).reshape(-1, 2)
            if len(inner) == 0:
                raise ValueError("modified objective needs inner observation points")
            object.__setattr__(self, "inner_points", inner)
        elif self.inner_points is not None:
            raise ValueError("inner points only apply to the modified objective")


@dataclass(frozen=True)
class AdjointSource:
    """Line-source locations and complex weights driving the adjoint."""

    points: np.ndarray
    weights: np.ndarray


def _residuals(spec, u_outer, inc_outer, u_inner):
    r = np.asarray(u_outer, dtype=complex).reshape(-1) - np.asarray(
        inc_outer, dtype=complex
    ).reshape(-1)
    if len(r) != len(spec.outer_points):
        raise ValueError("field values must cover every outer observation point")
    if spec.variant == "modified":
        if u_inner is None:
            raise ValueError("modified objective needs the inner field values")
        ui = np.asarray(u_inner, dtype=complex).reshape(-1)
        if len(ui) != len(spec.inner_points):
            raise ValueError("field values must cover every inner observation point")
    else:
        if u_inner is not None:
            raise ValueError("inner field values only apply to the modified objective")
        ui = None
    return r, ui


def objective_terms(
    spec: ObjectiveSpec, u_outer, inc_outer, u_inner=None
) -> tuple[float, float]:
    """(scattered-field term, quiet-zone term); the latter is 0 when conventional."""
    r, ui = _residuals(spec, u_outer, inc_outer, u_inner)
    outer = float(np.sum((r * r.conj()).real))
    inner = 0.0 if ui is None else float(np.sum((ui * ui.conj()).real))
    return outer, inner


def objective_value(spec: ObjectiveSpec, u_outer, inc_outer, u_inner=None) -> float:
    """J = sum |u - u_inc|^2 (+ sum |u|^2 over inner points when modified)."""
    return sum(objective_terms(spec, u_outer, inc_outer, u_inner))


def adjoint_source_weights(
    spec: ObjectiveSpec, u_outer, inc_outer, u_inner=None
) -> AdjointSource:
    """Source weights 2*conj(residual) per observation point."""
    r, ui = _residuals(spec, u_outer, inc_outer, u_inner)
    points = spec.outer_points
    weights = 2.0 * r.conj()
    if ui is not None:
        points = np.vstack([points, spec.inner_points])
        weights = np.concatenate([weights, 2.0 * ui.conj()])
    return AdjointSource(points=points, weights=weights)


def source_field(source: AdjointSource, k1: float):
    """Callable points -> (values, gradients) of the adjoint incident field."""

    def field(points):
        return adjoint_incident(points, source.points, source.weights, k1, grad=True)

    return field


def topological_derivative_field(
    lattice, u, u_adj, eps1: float, eps2: float, omega: float
) -> TDField:
    """T = Re[omega^2 (eps2-eps1) u u_adj] sampled on the given lattice."""
    u = np.asarray(u, dtype=complex).reshape(-1)
    ua = np.asarray(u_adj, dtype=complex).reshape(-1)
    if len(u) != lattice.nx * lattice.ny or len(ua) != len(u):
        raise ValueError("field samples do not match the lattice")
    t = (omega * omega * (eps2 - eps1) * u * ua).real
    return TDField(lattice.nx, lattice.ny, lattice.h, lattice.origin, t.reshape(lattice.nx, lattice.ny))


def conductor_interior(mesh, points) -> np.ndarray:
    """Even-odd ray test against the conductor loops of the mesh."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    inside = np.zeros(len(pts), dtype=bool)
    for loop in mesh.loops:
        if mesh.tags[loop[0]] != PEC:
            continue
        poly = mesh.nodes[mesh.segments[loop, 0]]
        x0, y0 = poly[:, 0], poly[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        dx, dy = x1 - x0, y1 - y0
        for lo in range(0, len(pts), _CHUNK_POINTS):
            px = pts[lo : lo + _CHUNK_POINTS, 0, None]
            py = pts[lo : lo + _CHUNK_POINTS, 1, None]
            straddle = (y0 <= py) != (y1 <= py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x0 + (py - y0) * dx / dy
            hits = np.sum(straddle & (px < xc), axis=1)
            inside[lo : lo + _CHUNK_POINTS] ^= (hits % 2).astype(bool)
    return inside


def _classified_eval(points, mesh, media, solution, incident, grid, backend, eta, n_min, tol):
    """Field values with the domain representation picked per point.

    Returns (values, pec_mask). incident may be a callable (added on the
    background side) and grid may be None for a configuration with no
    dielectric region.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = np.zeros(len(pts), dtype=complex)
    pec_in = conductor_interior(mesh, pts)
    codes = classify(grid, pts) if grid is not None else np.full(len(pts), OMEGA1)
    for domain, mask, inc in (
        ("omega1", (codes != OMEGA2) & ~pec_in, incident),
        ("omega2", (codes == OMEGA2) & ~pec_in, None),
    ):
        if not mask.any():
            continue
        sub = pts[mask]
        op = None
        if backend == "hmatrix":
            op = field_operator(mesh, media, sub, domain=domain, eta=eta, n_min=n_min, tol=tol)
        f = eval_field(
            solution, mesh, media, sub, domain=domain, incident=inc,
            backend=backend, operator=op,
        )
        u[mask] = f.values
    return u, pec_in


def total_field(
    points, mesh, media, solution, incident, grid=None, *,
    backend="dense", eta=128.0, n_min=128, tol=1e-5,
):
    """Total field at arbitrary points; conductor interiors give zero.

    The level-set grid, when given, decides which integral
    representation serves each point. An empty mesh means no scatterer,
    so the incident field is returned unchanged.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if mesh.n_segments == 0:
        return np.asarray(incident(pts)[0], dtype=complex)
    u, _ = _classified_eval(pts, mesh, media, solution, incident, grid, backend, eta, n_min, tol)
    return u


def td_on_lattice(
    grid, mesh, media, forward, adjoint, incident, adjoint_src: AdjointSource, *,
    backend="dense", eta=128.0, n_min=128, tol=1e-5,
):
    """Masked sensitivity samples on the level-set lattice.

    Lattice points clear of every boundary by half an element get the
    product formula; conductor interiors get zero (material may not be
    placed there). The near-boundary band, and points within half a
    lattice cell of an adjoint source (where the source field blows up),
    copy the nearest valid sample instead of risking a near-singular
    evaluation. An empty mesh short-circuits to the bare incident and
    adjoint source fields.
    """
    m1, m2 = media
    adjoint_inc = source_field(adjoint_src, m1.k)
    pts = grid.lattice_points()
    src_dist, _ = cKDTree(adjoint_src.points).query(pts)
    if mesh.n_segments:
        pec_in = conductor_interior(mesh, pts)
        near = near_boundary_flags(mesh, pts, factor=0.5) & ~pec_in
    else:
        pec_in = np.zeros(len(pts), dtype=bool)
        near = pec_in.copy()
    near |= (src_dist < 0.5 * grid.h) & ~pec_in
    valid = ~pec_in & ~near

    u = np.zeros(len(pts), dtype=complex)
    ua = np.zeros(len(pts), dtype=complex)
    if mesh.n_segments:
        codes = classify(grid, pts)
        for domain, mask, inc_f, inc_a in (
            ("omega1", valid & (codes != OMEGA2), incident, adjoint_inc),
            ("omega2", valid & (codes == OMEGA2), None, None),
        ):
            if not mask.any():
                continue
            sub = pts[mask]
            op = None
            if backend == "hmatrix":
                op = field_operator(mesh, media, sub, domain=domain, eta=eta, n_min=n_min, tol=tol)
            u[mask] = eval_field(
                forward, mesh, media, sub, domain=domain, incident=inc_f,
                backend=backend, operator=op,
            ).values
            ua[mask] = eval_field(
                adjoint, mesh, media, sub, domain=domain, incident=inc_a,
                backend=backend, operator=op,
            ).values
    elif valid.any():
        u[valid] = incident(pts[valid])[0]
        ua[valid] = adjoint_inc(pts[valid])[0]

    omega = m1.omega
    t = (omega * omega * (m2.eps - m1.eps) * u * ua).real
    t[~valid] = 0.0
    if near.any() and valid.any():
        tree = cKDTree(pts[valid])
        _, j = tree.query(pts[near])
        t[near] = t[valid][j]
    return TDField(grid.nx, grid.ny, grid.h, grid.origin, t.reshape(grid.nx, grid.ny))


__all__ = [
    "ObjectiveSpec",
    "AdjointSource",
    "objective_terms",
    "objective_value",
    "adjoint_source_weights",
    "source_field",
    "topological_derivative_field",
    "conductor_interior",
    "total_field",
    "td_on_lattice",
]
