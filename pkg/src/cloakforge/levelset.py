"""Lattice level-set description of the design object.

The design region is discretized by a regular lattice carrying a scalar
field phi in [-1, 1]. Sign decides the material layout: phi > 0 is the
background (vacuum, omega1), phi < 0 is dielectric material (omega2),
and the zero contour is the material boundary. Boundary extraction
interpolates phi linearly along lattice edges and connects the zero
crossings cell by cell; the resulting loops run with material on the
right of traversal, matching the mesh convention that normals point
into the material.

Configuration updates integrate a reaction-diffusion equation

    d(phi)/dt = C * sgn(phi) * T + tau * l^2 * laplace(phi)

with an explicit reaction term and an implicit five-point diffusion
term under zero-flux walls, clipping phi to [-1, 1] after every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import eye, kron, lil_matrix
from scipy.sparse.linalg import splu

from .bem2d.mesh import DIELECTRIC, BoundaryMesh
from .errors import GeometryError

OMEGA1 = 1
GAMMA_D = 0
OMEGA2 = 2

# interpolated |phi| below this counts as sitting on the boundary
_GAMMA_TOL = 1e-12


@dataclass(frozen=True)
class _Lattice:
    """Regular lattice of nx*ny points with spacing h.

    ``values[i, j]`` sits at ``origin + (i*h, j*h)``; flattened orders
    run with the x index outermost (C order of the (nx, ny) array).
    """

    nx: int
    ny: int
    h: float
    origin: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        vals = np.ascontiguousarray(self.values, dtype=float)
        if self.nx < 2 or self.ny < 2:
            raise ValueError("lattice needs at least 2 points per axis")
        if self.h <= 0:
            raise ValueError("lattice spacing must be positive")
        if vals.shape != (self.nx, self.ny):
            raise ValueError("value array shape does not match the lattice")
        if not np.isfinite(vals).all():
            raise ValueError("lattice values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    def lattice_points(self) -> np.ndarray:
        """(nx*ny, 2) point array aligned with ``values.ravel()``."""
        gx, gy = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def same_lattice(self, other) -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and abs(self.h - other.h) <= 1e-12 * self.h
            and abs(self.origin[0] - other.origin[0]) <= 1e-9 * self.h
            and abs(self.origin[1] - other.origin[1]) <= 1e-9 * self.h
        )


@dataclass(frozen=True)
class LevelSetGrid(_Lattice):
    """Level-set field; values stay within [-1, 1]."""

    def __post_init__(self):
        super().__post_init__()
        if np.abs(self.values).max() > 1.0 + 1e-12:
            raise ValueError("level-set values must lie in [-1, 1]")

    @staticmethod
    def filled(nx, ny, h, origin, value) -> "LevelSetGrid":
        return LevelSetGrid(nx, ny, h, origin, np.full((nx, ny), float(value)))


@dataclass(frozen=True)
class TDField(_Lattice):
    """Sensitivity samples on the same lattice as the level-set field."""


def classify(grid: LevelSetGrid, points):
    """Region code per point: OMEGA1, GAMMA_D, or OMEGA2.

    phi is interpolated bilinearly; its sign picks the region, with a
    1e-12 band flagged as the boundary. Points outside the lattice hull
    are background vacuum by the problem setup.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    u = (pts[:, 0] - grid.origin[0]) / grid.h
    v = (pts[:, 1] - grid.origin[1]) / grid.h
    inside = (u >= 0) & (u <= grid.nx - 1) & (v >= 0) & (v <= grid.ny - 1)
    iu = np.clip(np.floor(u).astype(np.int64), 0, grid.nx - 2)
    iv = np.clip(np.floor(v).astype(np.int64), 0, grid.ny - 2)
    fu = np.clip(u - iu, 0.0, 1.0)
    fv = np.clip(v - iv, 0.0, 1.0)
    g = grid.values
    f = (
        g[iu, iv] * (1 - fu) * (1 - fv)
        + g[iu + 1, iv] * fu * (1 - fv)
        + g[iu, iv + 1] * (1 - fu) * fv
        + g[iu + 1, iv + 1] * fu * fv
    )
    codes = np.where(f < 0, OMEGA2, OMEGA1)
    codes[np.abs(f) < _GAMMA_TOL] = GAMMA_D
    codes[~inside] = OMEGA1
    return int(codes[0]) if single else codes


# oriented crossing connections per corner-sign case; bits order the
# corners (i,j), (i+1,j), (i+1,j+1), (i,j+1), set when phi < 0, and the
# material side stays on the right of each directed segment
_CASES = {
    1: [("W", "S")],
    2: [("S", "E")],
    4: [("E", "N")],
    8: [("N", "W")],
    3: [("W", "E")],
    6: [("S", "N")],
    12: [("E", "W")],
    9: [("N", "S")],
    14: [("S", "W")],
    13: [("E", "S")],
    11: [("N", "E")],
    7: [("W", "N")],
}
# saddle cells carry two segments; the cell-center average breaks the tie
_SADDLE = {
    (5, True): [("E", "S"), ("W", "N")],
    (5, False): [("W", "S"), ("E", "N")],
    (10, True): [("S", "W"), ("N", "E")],
    (10, False): [("S", "E"), ("N", "W")],
}


def extract_boundary(grid: LevelSetGrid) -> BoundaryMesh:
    """Zero-contour boundary mesh of the level-set field.

    Crossings are located by linear interpolation along lattice edges
    and joined within each cell, oriented so material (phi < 0) lies on
    the right. Chains closing on themselves become loops; a contour that
    runs off the lattice stays an open chain and the returned mesh then
    carries geometry only. Lattice values of exactly zero count as
    background, displaced by 1e-12 so crossings stay well defined.
    """
    v = np.where(grid.values == 0.0, _GAMMA_TOL, grid.values)
    neg = v < 0.0
    if not neg.any() or neg.all():
        return BoundaryMesh(
            np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        )
    x, y, h = grid.x, grid.y, grid.h

    # crossing coordinates per lattice edge, NaN where signs agree
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = v[:-1, :] / (v[:-1, :] - v[1:, :])
        ty = v[:, :-1] / (v[:, :-1] - v[:, 1:])
    cross_h = np.stack([x[:-1, None] + tx * h, np.broadcast_to(y, tx.shape)], axis=-1)
    cross_v = np.stack([np.broadcast_to(x[:, None], ty.shape), y[None, :-1] + ty * h], axis=-1)

    def edge_key(name, i, j):
        if name == "S":
            return ("H", i, j)
        if name == "N":
            return ("H", i, j + 1)
        if name == "W":
            return ("V", i, j)
        return ("V", i + 1, j)

    def edge_point(key):
        kind, i, j = key
        return cross_h[i, j] if kind == "H" else cross_v[i, j]

    cells = np.argwhere(
        neg[:-1, :-1] | neg[1:, :-1] | neg[1:, 1:] | neg[:-1, 1:]
    )
    seg_keys = []
    for i, j in cells:
        case = (
            int(neg[i, j])
            + 2 * int(neg[i + 1, j])
            + 4 * int(neg[i + 1, j + 1])
            + 8 * int(neg[i, j + 1])
        )
        if case in (0, 15):
            continue
        if case in (5, 10):
            center = v[i, j] + v[i + 1, j] + v[i + 1, j + 1] + v[i, j + 1]
            pairs = _SADDLE[(case, center < 0.0)]
        else:
            pairs = _CASES[case]
        for a, b in pairs:
            seg_keys.append((edge_key(a, i, j), edge_key(b, i, j)))

    # chain segments head to tail; every crossing is entered and left once
    start_of = {}
    for idx, (ka, _kb) in enumerate(seg_keys):
        if ka in start_of:
            raise GeometryError("inconsistent contour orientation")
        start_of[ka] = idx
    n = len(seg_keys)
    nxt = np.full(n, -1, dtype=np.int64)
    has_pred = np.zeros(n, dtype=bool)
    for idx, (_ka, kb) in enumerate(seg_keys):
        j = start_of.get(kb, -1)
        nxt[idx] = j
        if j >= 0:
            has_pred[j] = True

    visited = np.zeros(n, dtype=bool)
    nodes = []
    segments = []
    base = 0
    any_open = False
    for s in list(np.flatnonzero(~has_pred)) + list(range(n)):
        if visited[s]:
            continue
        chain = []
        cur = s
        while cur != -1 and not visited[cur]:
            visited[cur] = True
            chain.append(cur)
            cur = nxt[cur]
        closed = cur == s
        pts = [edge_point(seg_keys[i][0]) for i in chain]
        if closed:
            idx = base + np.arange(len(chain))
            segments.append(np.stack([idx, np.roll(idx, -1)], axis=1))
        else:
            any_open = True
            pts.append(edge_point(seg_keys[chain[-1]][1]))
            idx = base + np.arange(len(pts))
            segments.append(np.stack([idx[:-1], idx[1:]], axis=1))
        nodes.append(np.asarray(pts))
        base += len(pts)

    tags = np.full(sum(len(s) for s in segments), DIELECTRIC, dtype=np.int64)
    return BoundaryMesh(
        np.concatenate(nodes), np.concatenate(segments), tags, validate=not any_open
    )


def regularize_mesh(mesh: BoundaryMesh, target_length: float) -> BoundaryMesh:
    """Resample every chain by arclength to near-uniform segments.

    Closed loops shorter than three target lengths are dropped; open
    chains keep their end points. Node count per loop is the rounded
    perimeter over target_length, so segment lengths stay within about
    a factor 1.5 of the target.
    """
    if target_length <= 0:
        raise ValueError("target length must be positive")
    nodes = []
    segments = []
    tags = []
    base = 0
    any_open = False
    for loop in mesh.loops:
        closed = mesh.next_seg[loop[-1]] == loop[0]
        pts = mesh.nodes[mesh.segments[loop, 0]]
        last = mesh.nodes[mesh.segments[loop[-1], 1]]
        poly = np.vstack([pts, last[None, :]])
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))])
        length = arc[-1]
        if closed and length < 3.0 * target_length:
            continue
        if closed:
            m = max(3, int(round(length / target_length)))
            s = length * np.arange(m) / m
        else:
            any_open = True
            m = max(1, int(round(length / target_length)))
            s = length * np.arange(m + 1) / m
        new = np.stack([np.interp(s, arc, poly[:, 0]), np.interp(s, arc, poly[:, 1])], axis=1)
        idx = base + np.arange(len(new))
        if closed:
            segments.append(np.stack([idx, np.roll(idx, -1)], axis=1))
            tags.append(np.full(len(new), mesh.tags[loop[0]], dtype=np.int64))
        else:
            segments.append(np.stack([idx[:-1], idx[1:]], axis=1))
            tags.append(np.full(len(new) - 1, mesh.tags[loop[0]], dtype=np.int64))
        nodes.append(new)
        base += len(new)
    if not nodes:
        return BoundaryMesh(
            np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        )
    return BoundaryMesh(
        np.concatenate(nodes), np.concatenate(segments), np.concatenate(tags),
        validate=not any_open,
    )


def _lap1d(n):
    # integer five-point stencil factor; walls mirror the inward neighbor,
    # matching lumped-mass linear finite elements on the lattice
    lap = lil_matrix((n, n))
    lap.setdiag(-2.0)
    lap.setdiag(1.0, 1)
    lap.setdiag(1.0, -1)
    lap[0, 1] = 2.0
    lap[n - 1, n - 2] = 2.0
    return lap


@lru_cache(maxsize=32)
def _diffusion_solver(nx, ny, nu):
    """Cached factorization of the implicit diffusion step I - nu*lap."""
    if nu == 0.0:
        return None
    lap = kron(_lap1d(nx), eye(ny)) + kron(eye(nx), _lap1d(ny))
    return splu((eye(nx * ny) - nu * lap).tocsc())


def rd_update(
    grid: LevelSetGrid,
    td: TDField,
    c_scale: float,
    tau: float,
    length: float,
    dt: float,
    steps: int = 1,
) -> LevelSetGrid:
    """Advance phi by reaction-diffusion steps of size dt.

    Each step applies the reaction c_scale * sgn(phi) * T explicitly,
    then the diffusion tau * length^2 * laplace(phi) implicitly under
    zero-flux walls, and clips to [-1, 1]. The sparse factorization is
    cached across calls on the same lattice and coefficients. sgn(0)
    counts as +1.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    if tau < 0:
        raise ValueError("regularization strength must be nonnegative")
    if not grid.same_lattice(td):
        raise ValueError("level-set and sensitivity lattices do not match")
    nu = tau * length * length * dt / (grid.h * grid.h)
    solver = _diffusion_solver(grid.nx, grid.ny, float(nu))
    phi = grid.values.copy()
    for _ in range(int(steps)):
        phi += dt * c_scale * np.where(phi >= 0.0, 1.0, -1.0) * td.values
        if solver is not None:
            phi = solver.solve(phi.ravel()).reshape(grid.nx, grid.ny)
        np.clip(phi, -1.0, 1.0, out=phi)
    return LevelSetGrid(grid.nx, grid.ny, grid.h, grid.origin, phi)


def reaction_scale(td: TDField, kappa: float = 1.0) -> float:
    """Adaptive reaction coefficient kappa / max|T| (zero for a flat field)."""
    m = float(np.max(np.abs(td.values))) if td.values.size else 0.0
    return kappa / m if m > 0 else 0.0


def init_from_td(td: TDField, center, radius: float) -> LevelSetGrid:
    """Seed a configuration from a bootstrap sensitivity field.

    Material is placed where T <= 0 within the given circle (phi = -1,
    +1 elsewhere); one implicit diffusion pass with diffusion length h
    then opens a smooth zero contour between the plateaus. Single-point
    features may be rounded away by that pass.
    """
    pts = td.lattice_points()
    d2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1)
    inside = (td.values.ravel() <= 0.0) & (d2 <= radius * radius)
    phi = np.where(inside, -1.0, 1.0).reshape(td.nx, td.ny)
    grid = LevelSetGrid(td.nx, td.ny, td.h, td.origin, phi)
    flat = TDField(td.nx, td.ny, td.h, td.origin, np.zeros_like(td.values))
    return rd_update(grid, flat, 0.0, tau=1.0, length=td.h, dt=1.0)


def dump_grid(lattice: _Lattice, path) -> None:
    """ASCII lattice dump: header nx ny h ox oy, then one value per line."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"{lattice.nx} {lattice.ny} {lattice.h:.17g} "
            f"{lattice.origin[0]:.17g} {lattice.origin[1]:.17g}\n"
        )
        for val in lattice.values.ravel():
            fh.write(f"{val:.17g}\n")


def load_grid(path, cls=LevelSetGrid):
    """Read a lattice dump back as cls (LevelSetGrid or TDField)."""
    with open(path, encoding="ascii") as fh:
        head = fh.readline().split()
        nx, ny = int(head[0]), int(head[1])
        h, ox, oy = float(head[2]), float(head[3]), float(head[4])
        vals = np.loadtxt(fh).reshape(nx, ny)
    return cls(nx, ny, h, (ox, oy), vals)


__all__ = [
    "OMEGA1",
    "GAMMA_D",
    "OMEGA2",
    "LevelSetGrid",
    "TDField",
    "classify",
    "extract_boundary",
    "regularize_mesh",
    "rd_update",
    "reaction_scale",
    "init_from_td",
    "dump_grid",
    "load_grid",
]
