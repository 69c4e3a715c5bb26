"""Hierarchical matrix assembly, application, and agglomeration.

A block node pairs one row cluster with one column cluster. Admissible
pairs become ACA low-rank leaves, pairs where at least one cluster is a
leaf become dense blocks, and everything else is subdivided 2x2. Leaf
content is a pure function of the entry evaluator, so assembly results do
not depend on worker count or scheduling order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aca import aca_approximate
from .cluster import ClusterNode, ClusterTree, admissible
from .lowrank import svd_recompress

ADMISSIBLE = "admissible"
INADMISSIBLE = "inadmissible"
SUBDIVIDED = "subdivided"


@dataclass
class BlockNode:
    row: ClusterNode
    col: ClusterNode
    status: str
    children: list["BlockNode"] | None = None  # 2x2, row-major
    U: np.ndarray | None = None
    V: np.ndarray | None = None
    dense: np.ndarray | None = None
    aca_converged: bool = True
    lufact: object | None = None  # set on dense diagonal leaves by H-LU

    @property
    def level(self) -> int:
        return self.row.level

    @property
    def shape(self) -> tuple[int, int]:
        return self.row.size, self.col.size

    @property
    def rank(self) -> int:
        if self.status == ADMISSIBLE:
            return self.U.shape[1]
        if self.status == INADMISSIBLE:
            return min(self.shape)
        return 0

    def child(self, i: int, j: int) -> "BlockNode":
        return self.children[2 * i + j]

    def stored_scalars(self) -> int:
        if self.status == ADMISSIBLE:
            m, n = self.shape
            return self.U.shape[1] * (m + n)
        if self.status == INADMISSIBLE:
            m, n = self.shape
            return m * n
        return sum(c.stored_scalars() for c in self.children)


def _build_block(row: ClusterNode, col: ClusterNode, eta: float) -> BlockNode:
    if admissible(row, col, eta):
        return BlockNode(row=row, col=col, status=ADMISSIBLE)
    if not row.is_leaf and not col.is_leaf:
        node = BlockNode(row=row, col=col, status=SUBDIVIDED, children=[])
        for rc in row.children:
            for cc in col.children:
                node.children.append(_build_block(rc, cc, eta))
        return node
    return BlockNode(row=row, col=col, status=INADMISSIBLE)


@dataclass
class HMatrix:
    """Block-structured matrix over a row tree and a column tree."""

    row_tree: ClusterTree
    col_tree: ClusterTree
    root: BlockNode
    eta: float
    tol: float
    stats: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_tree.size, self.col_tree.size

    def leaf_blocks(self) -> list[BlockNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.status == SUBDIVIDED:
                stack.extend(reversed(node.children))
            else:
                out.append(node)
        return out

    def all_blocks(self) -> list[BlockNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if node.status == SUBDIVIDED:
                stack.extend(reversed(node.children))
        return out

    def stored_scalars(self) -> int:
        return self.root.stored_scalars()

    def dense_scalars(self) -> int:
        m, n = self.shape
        return m * n

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to one vector (n,) or a batch (n, q), external ordering."""
        squeeze = x.ndim == 1
        X = np.atleast_2d(x.T).T.astype(complex, copy=False)
        Xt = X[self.col_tree.perm]
        Yt = np.zeros((self.shape[0], X.shape[1]), dtype=complex)
        _apply(self.root, Xt, Yt)
        Y = np.empty_like(Yt)
        Y[self.row_tree.perm] = Yt
        return Y[:, 0] if squeeze else Y

    def to_dense(self) -> np.ndarray:
        A = np.zeros(self.shape, dtype=complex)
        for blk in self.leaf_blocks():
            r, c = blk.row, blk.col
            if blk.status == ADMISSIBLE:
                A[r.lo : r.hi, c.lo : c.hi] = blk.U @ blk.V.conj().T
            else:
                A[r.lo : r.hi, c.lo : c.hi] = blk.dense
        out = np.empty_like(A)
        out[np.ix_(self.row_tree.perm, self.col_tree.perm)] = A
        return out

    def dump_blocks(self) -> str:
        """One line per block node: level row_lo row_hi col_lo col_hi status rank."""
        lines = []
        for node in self.all_blocks():
            lines.append(
                f"{node.level} {node.row.lo} {node.row.hi} "
                f"{node.col.lo} {node.col.hi} {node.status} {node.rank}"
            )
        return "\n".join(lines) + "\n"


def _apply(node: BlockNode, Xt: np.ndarray, Yt: np.ndarray) -> None:
    r, c = node.row, node.col
    if node.status == SUBDIVIDED:
        for child in node.children:
            _apply(child, Xt, Yt)
    elif node.status == ADMISSIBLE:
        Yt[r.lo : r.hi] += node.U @ (node.V.conj().T @ Xt[c.lo : c.hi])
    else:
        Yt[r.lo : r.hi] += node.dense @ Xt[c.lo : c.hi]


def assemble_hmatrix(
    entry,
    row_tree: ClusterTree,
    col_tree: ClusterTree,
    eta: float,
    tol: float,
    workers: int = 1,
    max_rank: int | None = None,
) -> HMatrix:
    """Assemble the H-matrix of ``entry`` over the given cluster trees.

    ``entry(i_ext, j_ext)`` evaluates the dense cross block for external
    index arrays. Leaves are processed from a shared work list in
    descending size order; every leaf is an independent pure task, so the
    result is identical for any ``workers`` value.
    """
    root = _build_block(row_tree.root, col_tree.root, eta)
    hmat = HMatrix(
        row_tree=row_tree, col_tree=col_tree, root=root, eta=eta, tol=tol
    )
    leaves = hmat.leaf_blocks()
    leaves.sort(key=lambda b: (-b.shape[0] * b.shape[1], b.row.lo, b.col.lo))

    def fill(blk: BlockNode) -> None:
        rows = row_tree.perm[blk.row.lo : blk.row.hi]
        cols = col_tree.perm[blk.col.lo : blk.col.hi]
        if blk.status == ADMISSIBLE:
            res = aca_approximate(entry, rows, cols, tol, max_rank=max_rank)
            blk.U, blk.V = res.U, res.V
            blk.aca_converged = res.converged
        else:
            blk.dense = np.asarray(entry(rows, cols), dtype=complex)

    if workers <= 1:
        for blk in leaves:
            fill(blk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, leaves))

    hmat.stats["leaf_count"] = len(leaves)
    hmat.stats["stored_scalars"] = hmat.stored_scalars()
    return hmat


def _stack_quad(node: BlockNode) -> tuple[np.ndarray, np.ndarray]:
    """Exact combined factors of four low-rank children.

    Row factors stack block-diagonally by row child, column factors by
    column child, so the product reproduces all four children in place.
    """
    nw, ne, sw, se = (node.child(0, 0), node.child(0, 1),
                      node.child(1, 0), node.child(1, 1))
    m1, m2 = nw.shape[0], sw.shape[0]
    n1, n2 = nw.shape[1], ne.shape[1]
    ranks = [b.U.shape[1] for b in (nw, sw, ne, se)]
    K = sum(ranks)
    U = np.zeros((m1 + m2, K), dtype=complex)
    V = np.zeros((n1 + n2, K), dtype=complex)
    k0 = 0
    for blk, rows, cols in (
        (nw, slice(0, m1), slice(0, n1)),
        (sw, slice(m1, m1 + m2), slice(0, n1)),
        (ne, slice(0, m1), slice(n1, n1 + n2)),
        (se, slice(m1, m1 + m2), slice(n1, n1 + n2)),
    ):
        k = blk.U.shape[1]
        U[rows, k0 : k0 + k] = blk.U
        V[cols, k0 : k0 + k] = blk.V
        k0 += k
    return U, V


def agglomerate(hmat: HMatrix, tol: float | None = None) -> int:
    """Merge sibling low-rank quartets bottom-up where storage shrinks.

    A subdivided node whose four children are all low-rank leaves is
    replaced by a single low-rank leaf obtained by stacking the child
    factors and rounding with the shared SVD primitive. The merge is kept
    only when it reduces stored scalars. Returns the number of merges.
    """
    if tol is None:
        tol = hmat.tol
    merges = 0

    def visit(node: BlockNode) -> None:
        nonlocal merges
        if node.status != SUBDIVIDED:
            return
        for child in node.children:
            visit(child)
        if not all(c.status == ADMISSIBLE for c in node.children):
            return
        before = sum(c.stored_scalars() for c in node.children)
        U, V = _stack_quad(node)
        Unew, Vnew = svd_recompress(U, V, tol)
        m, n = node.shape
        after = Unew.shape[1] * (m + n)
        if after < before:
            node.status = ADMISSIBLE
            node.U, node.V = Unew, Vnew
            node.children = None
            merges += 1

    visit(hmat.root)
    hmat.stats["agglomerated"] = hmat.stats.get("agglomerated", 0) + merges
    hmat.stats["stored_scalars"] = hmat.stored_scalars()
    return merges
