"""Block-recursive LU factorization of a square H-matrix.

The factorization walks the block tree: dense diagonal leaves take a
pivoted LAPACK LU, subdivided diagonal nodes factor the leading child,
triangular-solve the two off-diagonal panels in place, apply a truncated
Schur update to the trailing child, and recurse. Off-diagonal content
stays in whatever representation it already has (low-rank panels keep
their factors; only one side is touched per solve). All rank truncations
go through the same SVD rounding primitive as agglomeration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, solve_triangular

from ..errors import SingularSystemError
from .cluster import ClusterTree
from .hmatrix import ADMISSIBLE, INADMISSIBLE, SUBDIVIDED, BlockNode, HMatrix
from .lowrank import dense_to_lowrank, svd_recompress, truncate_lowrank_sum


@dataclass
class _DenseLU:
    perm: np.ndarray  # A[perm] = L @ U
    L: np.ndarray
    U: np.ndarray


def _piv_to_perm(piv: np.ndarray) -> np.ndarray:
    perm = np.arange(len(piv))
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm


def _copy_block(node: BlockNode) -> BlockNode:
    out = BlockNode(row=node.row, col=node.col, status=node.status)
    if node.status == SUBDIVIDED:
        out.children = [_copy_block(c) for c in node.children]
    elif node.status == ADMISSIBLE:
        out.U = node.U.copy()
        out.V = node.V.copy()
    else:
        out.dense = node.dense.copy()
    return out


# ---------------------------------------------------------------------------
# Dense products against a block subtree (tree-local index ranges).


def apply_block(node: BlockNode, X: np.ndarray) -> np.ndarray:
    """node @ X for dense X over the node's column range."""
    Y = np.zeros((node.row.size, X.shape[1]), dtype=complex)
    _accum(node, X, Y, node.row.lo, node.col.lo)
    return Y


def _accum(node: BlockNode, X, Y, r0: int, c0: int) -> None:
    if node.status == SUBDIVIDED:
        for child in node.children:
            _accum(child, X, Y, r0, c0)
        return
    rs = slice(node.row.lo - r0, node.row.hi - r0)
    cs = slice(node.col.lo - c0, node.col.hi - c0)
    if node.status == ADMISSIBLE:
        Y[rs] += node.U @ (node.V.conj().T @ X[cs])
    else:
        Y[rs] += node.dense @ X[cs]


def apply_block_adjoint(node: BlockNode, X: np.ndarray) -> np.ndarray:
    """node^H @ X for dense X over the node's row range."""
    Y = np.zeros((node.col.size, X.shape[1]), dtype=complex)
    _accum_adj(node, X, Y, node.row.lo, node.col.lo)
    return Y


def _accum_adj(node: BlockNode, X, Y, r0: int, c0: int) -> None:
    if node.status == SUBDIVIDED:
        for child in node.children:
            _accum_adj(child, X, Y, r0, c0)
        return
    rs = slice(node.row.lo - r0, node.row.hi - r0)
    cs = slice(node.col.lo - c0, node.col.hi - c0)
    if node.status == ADMISSIBLE:
        Y[cs] += node.V @ (node.U.conj().T @ X[rs])
    else:
        Y[cs] += node.dense.conj().T @ X[rs]


# ---------------------------------------------------------------------------
# Truncated block updates.


def _add_lowrank(node: BlockNode, U: np.ndarray, V: np.ndarray, tol: float) -> None:
    """node := node - U V^H, rounding low-rank leaves at tol."""
    if U.shape[1] == 0:
        return
    if node.status == SUBDIVIDED:
        r0, c0 = node.row.lo, node.col.lo
        for child in node.children:
            _add_lowrank(
                child,
                U[child.row.lo - r0 : child.row.hi - r0],
                V[child.col.lo - c0 : child.col.hi - c0],
                tol,
            )
    elif node.status == INADMISSIBLE:
        node.dense -= U @ V.conj().T
    else:
        node.U, node.V = truncate_lowrank_sum(node.U, node.V, -U, V, tol)


def _mul_to_lowrank(A: BlockNode, B: BlockNode, tol: float):
    """Factors (U, V) with A @ B ~= U V^H at relative tol."""
    if A.status == ADMISSIBLE:
        return A.U, apply_block_adjoint(B, A.V)
    if B.status == ADMISSIBLE:
        return apply_block(A, B.U), B.V
    if A.status == INADMISSIBLE:
        if B.status == INADMISSIBLE:
            D = A.dense @ B.dense
        else:
            D = apply_block_adjoint(B, A.dense.conj().T).conj().T
        return dense_to_lowrank(D, tol)
    if B.status == INADMISSIBLE:
        return dense_to_lowrank(apply_block(A, B.dense), tol)
    # Both subdivided: form the four quadrant products as low rank, then
    # stack them block-diagonally and round, mirroring agglomeration.
    m1 = A.child(0, 0).row.size
    m2 = A.child(1, 0).row.size
    n1 = B.child(0, 0).col.size
    n2 = B.child(0, 1).col.size
    quads = {}
    for i in (0, 1):
        for j in (0, 1):
            U1, V1 = _mul_to_lowrank(A.child(i, 0), B.child(0, j), tol)
            U2, V2 = _mul_to_lowrank(A.child(i, 1), B.child(1, j), tol)
            quads[i, j] = truncate_lowrank_sum(U1, V1, U2, V2, tol)
    K = sum(q[0].shape[1] for q in quads.values())
    U = np.zeros((m1 + m2, K), dtype=complex)
    V = np.zeros((n1 + n2, K), dtype=complex)
    k0 = 0
    for (i, j), (Uq, Vq) in quads.items():
        k = Uq.shape[1]
        rows = slice(0, m1) if i == 0 else slice(m1, m1 + m2)
        cols = slice(0, n1) if j == 0 else slice(n1, n1 + n2)
        U[rows, k0 : k0 + k] = Uq
        V[cols, k0 : k0 + k] = Vq
        k0 += k
    return svd_recompress(U, V, tol)


def hmultiply_sub(C: BlockNode, A: BlockNode, B: BlockNode, tol: float) -> None:
    """C := C - A @ B with truncation at tol."""
    if A.status == ADMISSIBLE:
        _add_lowrank(C, A.U, apply_block_adjoint(B, A.V), tol)
        return
    if B.status == ADMISSIBLE:
        _add_lowrank(C, apply_block(A, B.U), B.V, tol)
        return
    if A.status == INADMISSIBLE and B.status == INADMISSIBLE and C.status == INADMISSIBLE:
        C.dense -= A.dense @ B.dense
        return
    if A.status == INADMISSIBLE or B.status == INADMISSIBLE:
        U, V = _mul_to_lowrank(A, B, tol)
        _add_lowrank(C, U, V, tol)
        return
    # A and B subdivided.
    if C.status == SUBDIVIDED:
        for i in (0, 1):
            for j in (0, 1):
                for l in (0, 1):
                    hmultiply_sub(C.child(i, j), A.child(i, l), B.child(l, j), tol)
    else:
        U, V = _mul_to_lowrank(A, B, tol)
        _add_lowrank(C, U, V, tol)


# ---------------------------------------------------------------------------
# Triangular solves.


def _solve_lower_dense(diag: BlockNode, M: np.ndarray) -> np.ndarray:
    """L^{-1} M for the factored diagonal node, dense M."""
    if diag.status == INADMISSIBLE:
        F = diag.lufact
        return solve_triangular(F.L, M[F.perm], lower=True, unit_diagonal=True)
    c00, c10, c11 = diag.child(0, 0), diag.child(1, 0), diag.child(1, 1)
    m0 = c00.row.size
    M0 = _solve_lower_dense(c00, M[:m0])
    M1 = M[m0:] - apply_block(c10, M0)
    return np.vstack([M0, _solve_lower_dense(c11, M1)])


def _solve_upper_dense(diag: BlockNode, M: np.ndarray) -> np.ndarray:
    """U^{-1} M for the factored diagonal node, dense M."""
    if diag.status == INADMISSIBLE:
        return solve_triangular(diag.lufact.U, M, lower=False)
    c00, c01, c11 = diag.child(0, 0), diag.child(0, 1), diag.child(1, 1)
    m0 = c00.row.size
    X1 = _solve_upper_dense(c11, M[m0:])
    X0 = _solve_upper_dense(c00, M[:m0] - apply_block(c01, X1))
    return np.vstack([X0, X1])


def _solve_upper_adjoint_dense(diag: BlockNode, M: np.ndarray) -> np.ndarray:
    """(U^H)^{-1} M for the factored diagonal node, dense M."""
    if diag.status == INADMISSIBLE:
        return solve_triangular(diag.lufact.U, M, lower=False, trans="C")
    c00, c01, c11 = diag.child(0, 0), diag.child(0, 1), diag.child(1, 1)
    m0 = c00.row.size
    X0 = _solve_upper_adjoint_dense(c00, M[:m0])
    X1 = _solve_upper_adjoint_dense(c11, M[m0:] - apply_block_adjoint(c01, X0))
    return np.vstack([X0, X1])


def _lower_solve_panel(diag: BlockNode, panel: BlockNode, tol: float) -> None:
    """panel := L(diag)^{-1} panel."""
    if panel.status == ADMISSIBLE:
        panel.U = _solve_lower_dense(diag, panel.U)
        return
    if panel.status == INADMISSIBLE:
        panel.dense = _solve_lower_dense(diag, panel.dense)
        return
    c00, c10, c11 = diag.child(0, 0), diag.child(1, 0), diag.child(1, 1)
    for j in (0, 1):
        top, bot = panel.child(0, j), panel.child(1, j)
        _lower_solve_panel(c00, top, tol)
        hmultiply_sub(bot, c10, top, tol)
        _lower_solve_panel(c11, bot, tol)


def _upper_solve_panel_right(diag: BlockNode, panel: BlockNode, tol: float) -> None:
    """panel := panel U(diag)^{-1}."""
    if panel.status == ADMISSIBLE:
        panel.V = _solve_upper_adjoint_dense(diag, panel.V)
        return
    if panel.status == INADMISSIBLE:
        # X U = B  <=>  U^H X^H = B^H
        panel.dense = _solve_upper_adjoint_dense(
            diag, panel.dense.conj().T
        ).conj().T
        return
    c00, c01, c11 = diag.child(0, 0), diag.child(0, 1), diag.child(1, 1)
    for i in (0, 1):
        left, right = panel.child(i, 0), panel.child(i, 1)
        _upper_solve_panel_right(c00, left, tol)
        hmultiply_sub(right, left, c01, tol)
        _upper_solve_panel_right(c11, right, tol)


# ---------------------------------------------------------------------------
# Factorization driver.


def _factorize(node: BlockNode, tol: float) -> None:
    if node.status == INADMISSIBLE:
        D = node.dense
        if not np.all(np.isfinite(D)):
            raise SingularSystemError("non-finite entries in diagonal block")
        with warnings.catch_warnings():
            # Zero pivots are detected below and reported as
            # SingularSystemError; the LAPACK warning is redundant.
            warnings.simplefilter("ignore")
            lu, piv = lu_factor(D, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.size and (diag.min() == 0.0 or not np.all(np.isfinite(diag))):
            raise SingularSystemError("singular system: zero pivot in H-LU")
        node.lufact = _DenseLU(
            perm=_piv_to_perm(piv),
            L=np.tril(lu, -1) + np.eye(len(D)),
            U=np.triu(lu),
        )
        node.dense = None
        return
    if node.status != SUBDIVIDED:
        raise SingularSystemError("admissible block on the diagonal")
    c00, c01, c10, c11 = node.children
    _factorize(c00, tol)
    _lower_solve_panel(c00, c01, tol)
    _upper_solve_panel_right(c00, c10, tol)
    hmultiply_sub(c11, c10, c01, tol)
    _factorize(c11, tol)


@dataclass
class HLUFactor:
    """Factored copy of a square H-matrix; the source is left untouched."""

    tree: ClusterTree
    root: BlockNode
    tol: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for one vector or a column batch, external order."""
        squeeze = b.ndim == 1
        B = np.atleast_2d(b.T).T.astype(complex, copy=False)
        Bt = B[self.tree.perm]
        Y = _solve_lower_vec(self.root, Bt)
        X = _solve_upper_vec(self.root, Y)
        out = np.empty_like(X)
        out[self.tree.perm] = X
        return out[:, 0] if squeeze else out

    def stored_scalars(self) -> int:
        def count(node: BlockNode) -> int:
            if node.status == SUBDIVIDED:
                return sum(count(c) for c in node.children)
            if node.status == ADMISSIBLE:
                m, n = node.shape
                return node.U.shape[1] * (m + n)
            F = node.lufact
            return F.L.size + F.U.size
        return count(self.root)


def _solve_lower_vec(node: BlockNode, B: np.ndarray) -> np.ndarray:
    return _solve_lower_dense(node, B)


def _solve_upper_vec(node: BlockNode, B: np.ndarray) -> np.ndarray:
    return _solve_upper_dense(node, B)


def hlu_factorize(hmat: HMatrix, tol: float | None = None) -> HLUFactor:
    """Factor a square H-matrix built on one shared cluster tree.

    Works on a deep copy; the input stays valid for residual checks. The
    truncation tolerance defaults to the assembly tolerance.
    """
    if hmat.row_tree is not hmat.col_tree:
        raise ValueError("H-LU requires identical row and column trees")
    if tol is None:
        tol = hmat.tol
    root = _copy_block(hmat.root)
    _factorize(root, tol)
    return HLUFactor(tree=hmat.row_tree, root=root, tol=tol)


def hlu_solve(factor: HLUFactor, b: np.ndarray) -> np.ndarray:
    return factor.solve(b)
