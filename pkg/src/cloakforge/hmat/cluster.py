"""Geometric cluster tree over boundary segments.

Each degree of freedom is represented by a line segment (possibly degenerate,
i.e. a point). The tree recursively bisects the longer side of the axis
aligned bounding rectangle at its midpoint and assigns members by centroid.
Cluster diameters and pairwise distances are exact set distances over the
segment endpoints, not bounding-box estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def _cloud_diameter(pts: np.ndarray) -> float:
    """Exact max pairwise distance of a 2D point cloud."""
    if len(pts) == 1:
        return 0.0
    if len(pts) > 400:
        # Hull vertices suffice for the diameter; fall back to the bounding
        # box diagonal for (near-)collinear clouds where qhull gives up, in
        # which case the diagonal coincides with the true diameter.
        try:
            from scipy.spatial import ConvexHull

            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            span = pts.max(axis=0) - pts.min(axis=0)
            return float(np.hypot(span[0], span[1]))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    return float(np.sqrt(d2.max()))


@dataclass
class ClusterNode:
    """Contiguous index range [lo, hi) of the permuted member list."""

    lo: int
    hi: int
    level: int
    bbox: np.ndarray  # (2, 2): [[xmin, ymin], [xmax, ymax]] over endpoints
    children: tuple["ClusterNode", "ClusterNode"] | None = None
    _tree: "ClusterTree | None" = field(default=None, repr=False)
    _diam: float | None = field(default=None, repr=False)
    _kdtree: cKDTree | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def endpoint_cloud(self) -> np.ndarray:
        """All segment endpoints of the members, shape (2*size, 2)."""
        return self._tree.endpoints[self.lo : self.hi].reshape(-1, 2)

    def diameter(self) -> float:
        if self._diam is None:
            self._diam = _cloud_diameter(self.endpoint_cloud())
        return self._diam

    def kdtree(self) -> cKDTree:
        if self._kdtree is None:
            self._kdtree = cKDTree(self.endpoint_cloud())
        return self._kdtree


@dataclass
class ClusterTree:
    """Binary cluster tree plus the permutation it induces.

    ``perm[t]`` is the external index stored at tree position ``t``;
    ``inverse[e]`` is the tree position of external index ``e``.
    """

    root: ClusterNode
    perm: np.ndarray
    inverse: np.ndarray
    endpoints: np.ndarray  # permuted, shape (n, 2, 2)
    centroids: np.ndarray  # permuted, shape (n, 2)
    n_min: int

    @property
    def size(self) -> int:
        return len(self.perm)

    def leaves(self) -> list[ClusterNode]:
        out: list[ClusterNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out


def cluster_distance(a: ClusterNode, b: ClusterNode) -> float:
    """Exact min distance between the endpoint sets of two clusters."""
    if a is b:
        return 0.0
    small, big = (a, b) if a.size <= b.size else (b, a)
    d, _ = big.kdtree().query(small.endpoint_cloud())
    return float(np.min(d))


def admissible(a: ClusterNode, b: ClusterNode, eta: float) -> bool:
    """min(diam a, diam b) <= eta * dist(a, b), with touching pairs rejected."""
    dist = cluster_distance(a, b)
    if dist <= 0.0:
        return False
    return min(a.diameter(), b.diameter()) <= eta * dist


def _tight_bbox(endpoints: np.ndarray) -> np.ndarray:
    flat = endpoints.reshape(-1, 2)
    return np.stack([flat.min(axis=0), flat.max(axis=0)])


def build_cluster_tree(segments: np.ndarray, n_min: int) -> ClusterTree:
    """Build the bisection cluster tree for an (n, 2, 2) segment array.

    ``segments[i]`` holds the two endpoints of member ``i``; a degenerate
    segment (both endpoints equal) represents a point-supported member.
    Nodes holding at most ``n_min`` members become leaves. The split plane
    is the midpoint of the longer bounding-box side; members go by centroid,
    ties to the lower side. Midpoint splits that leave one side empty fall
    back to a median split so the recursion always terminates.
    """
    segments = np.asarray(segments, dtype=float)
    if segments.ndim != 3 or segments.shape[1:] != (2, 2):
        raise ValueError("segments must have shape (n, 2, 2)")
    n = len(segments)
    if n == 0:
        raise ValueError("cannot build a cluster tree over zero segments")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")

    perm = np.arange(n)
    endpoints = segments.copy()
    centroids = endpoints.mean(axis=1)

    tree = ClusterTree(
        root=None,  # filled below
        perm=perm,
        inverse=np.empty(n, dtype=int),
        endpoints=endpoints,
        centroids=centroids,
        n_min=n_min,
    )

    def build(lo: int, hi: int, level: int) -> ClusterNode:
        node = ClusterNode(
            lo=lo,
            hi=hi,
            level=level,
            bbox=_tight_bbox(endpoints[lo:hi]),
            _tree=tree,
        )
        count = hi - lo
        if count <= n_min:
            return node
        extent = node.bbox[1] - node.bbox[0]
        axis = int(np.argmax(extent))
        mid = 0.5 * (node.bbox[0, axis] + node.bbox[1, axis])
        keys = centroids[lo:hi, axis]
        left_mask = keys <= mid
        n_left = int(left_mask.sum())
        if n_left == 0 or n_left == count:
            # Degenerate midpoint split; order by centroid and halve. A
            # stable argsort keeps the permutation deterministic even with
            # duplicated coordinates.
            order = np.argsort(keys, kind="stable")
            n_left_final = count // 2
        else:
            order = np.concatenate(
                [np.flatnonzero(left_mask), np.flatnonzero(~left_mask)]
            )
            n_left_final = n_left
        local = np.arange(lo, hi)[order]
        perm[lo:hi] = perm[local]
        endpoints[lo:hi] = endpoints[local]
        centroids[lo:hi] = centroids[local]
        split = lo + n_left_final
        node.children = (
            build(lo, split, level + 1),
            build(split, hi, level + 1),
        )
        return node

    # Work on copies indexed by tree position; the permutation is updated in
    # lockstep with the reordered geometry arrays.
    tree.root = build(0, n, 0)
    tree.inverse[tree.perm] = np.arange(n)
    return tree
