"""Boundary meshes for the two-region scattering problem.

A mesh is a set of closed, oriented polygonal loops. Loops are traversed
with the enclosed material on the right-hand side, so the stored unit
normal n = (tau_y, -tau_x) points out of the background region (vacuum)
and into the material (conductor or dielectric) everywhere.
"""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError

PEC = 1
DIELECTRIC = 2

_TAG_NAMES = {PEC: "p", DIELECTRIC: "d"}
_TAG_CODES = {"p": PEC, "d": DIELECTRIC}


def tag_name(tag: int) -> str:
    return _TAG_NAMES[int(tag)]


def tag_code(name: str) -> int:
    return _TAG_CODES[name]


class BoundaryMesh:
    """Closed oriented loops of straight segments with interface tags.

    Parameters
    ----------
    nodes : (n_nodes, 2) float array
    segments : (n_seg, 2) int array
        Node index pairs in traversal order.
    tags : (n_seg,) int array
        Interface tag per segment, PEC or DIELECTRIC; uniform per loop.
    """

    def __init__(self, nodes, segments, tags, validate: bool = True):
        self.nodes = np.ascontiguousarray(nodes, dtype=float).reshape(-1, 2)
        self.segments = np.ascontiguousarray(segments, dtype=np.int64).reshape(-1, 2)
        self.tags = np.ascontiguousarray(tags, dtype=np.int64).reshape(-1)
        if len(self.tags) != len(self.segments):
            raise GeometryError("tag count does not match segment count")

        p0 = self.nodes[self.segments[:, 0]]
        p1 = self.nodes[self.segments[:, 1]]
        d = p1 - p0
        self.lengths = np.sqrt(np.sum(d * d, axis=1))
        if validate and np.any(self.lengths <= 0.0):
            raise GeometryError("zero-length segment")
        with np.errstate(invalid="ignore"):
            self.tangents = d / self.lengths[:, None]
        self.normals = np.stack([self.tangents[:, 1], -self.tangents[:, 0]], axis=1)
        self.midpoints = 0.5 * (p0 + p1)

        self.next_seg, self.loops = self._trace_loops(validate)

        self.pec_elems = np.flatnonzero(self.tags == PEC)
        self.diel_elems = np.flatnonzero(self.tags == DIELECTRIC)
        # Local successor map over dielectric elements; the start node of
        # dielectric element j carries the j-th nodal trace unknown.
        loc = -np.ones(len(self.segments), dtype=np.int64)
        loc[self.diel_elems] = np.arange(len(self.diel_elems))
        if len(self.diel_elems):
            nxt_d = self.next_seg[self.diel_elems]
            self.diel_next = np.where(nxt_d >= 0, loc[nxt_d], -1)
        else:
            self.diel_next = np.zeros(0, dtype=np.int64)

    def _trace_loops(self, validate):
        n_seg = len(self.segments)
        start_of = {}
        for i, (a, _b) in enumerate(self.segments):
            if a in start_of:
                raise GeometryError("mesh not watertight")
            start_of[int(a)] = i
        nxt = np.empty(n_seg, dtype=np.int64)
        for i, (_a, b) in enumerate(self.segments):
            j = start_of.get(int(b))
            if j is None:
                if validate:
                    raise GeometryError("mesh not watertight")
                # geometry-only mesh: an open chain ends here
                j = -1
            nxt[i] = j
        seen = np.zeros(n_seg, dtype=bool)
        loops = []
        # trace open chains from their head segment so each stays one piece
        has_pred = np.zeros(n_seg, dtype=bool)
        has_pred[nxt[nxt >= 0]] = True
        for i in list(np.flatnonzero(~has_pred)) + list(range(n_seg)):
            if seen[i]:
                continue
            loop = []
            j = i
            while j != -1 and not seen[j]:
                seen[j] = True
                loop.append(j)
                j = nxt[j]
            if validate and j != i:
                raise GeometryError("mesh not watertight")
            loop = np.asarray(loop, dtype=np.int64)
            if validate and len(set(self.tags[loop].tolist())) > 1:
                raise GeometryError("mixed interface tags within one loop")
            loops.append(loop)
        return nxt, loops

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def segment_endpoints(self, elems=None):
        """(n, 2, 2) endpoint array for the requested elements."""
        segs = self.segments if elems is None else self.segments[elems]
        return self.nodes[segs]

    def enclosed_area(self) -> float:
        """Total signed area on the material side (positive for valid loops)."""
        p0 = self.nodes[self.segments[:, 0]]
        p1 = self.nodes[self.segments[:, 1]]
        # Shoelace over traversal order; material on the right makes the
        # traversal clockwise, so negate to report enclosed area.
        return -0.5 * float(np.sum(p0[:, 0] * p1[:, 1] - p1[:, 0] * p0[:, 1]))

    @staticmethod
    def from_loops(loops):
        """Build a mesh from [(points (m, 2), tag), ...] closed loops.

        Consecutive points are joined; the last point connects back to
        the first. Orientation is taken as given.
        """
        all_nodes = []
        all_segs = []
        all_tags = []
        base = 0
        for pts, tag in loops:
            pts = np.asarray(pts, dtype=float).reshape(-1, 2)
            m = len(pts)
            if m < 3:
                raise GeometryError("loop needs at least 3 points")
            idx = base + np.arange(m)
            segs = np.stack([idx, np.roll(idx, -1)], axis=1)
            all_nodes.append(pts)
            all_segs.append(segs)
            all_tags.append(np.full(m, tag, dtype=np.int64))
            base += m
        if not all_nodes:
            return BoundaryMesh(np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
        return BoundaryMesh(np.concatenate(all_nodes), np.concatenate(all_segs), np.concatenate(all_tags))

    @staticmethod
    def merge(meshes):
        """Concatenate several meshes into one."""
        meshes = [m for m in meshes if m.n_segments > 0]
        if not meshes:
            return BoundaryMesh(np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
        nodes = []
        segs = []
        tags = []
        base = 0
        for m in meshes:
            nodes.append(m.nodes)
            segs.append(m.segments + base)
            tags.append(m.tags)
            base += len(m.nodes)
        return BoundaryMesh(np.concatenate(nodes), np.concatenate(segs), np.concatenate(tags))


def circle_mesh(n: int, radius: float, center=(0.0, 0.0), tag: int = PEC) -> BoundaryMesh:
    """Closed circular loop of n straight segments enclosing material.

    Traversal is clockwise so the stored normals point into the disc.
    """
    if n < 3:
        raise GeometryError("circle needs at least 3 segments")
    th = -2.0 * np.pi * np.arange(n) / n
    pts = np.asarray(center, dtype=float) + radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    return BoundaryMesh.from_loops([(pts, tag)])
