"""Adaptive cross approximation with partial pivoting.

Builds a low-rank factorization A ~= U @ V^H of a block that is only
available through an entry evaluator, touching one row and one column per
cross. The stopping test compares the latest cross against an incrementally
updated Frobenius-norm estimate of the accumulated approximant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ACAResult:
    """Low-rank factors with A ~= U @ V.conj().T."""

    U: np.ndarray  # (m, rank)
    V: np.ndarray  # (n, rank)
    converged: bool
    frob_estimate: float

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def matrix(self) -> np.ndarray:
        return self.U @ self.V.conj().T


def aca_approximate(
    entry,
    rows: np.ndarray,
    cols: np.ndarray,
    tol: float,
    max_rank: int | None = None,
    exact_norms: bool = False,
) -> ACAResult:
    """Cross-approximate the block ``entry(rows, cols)``.

    ``entry(i_array, j_array)`` must return the dense cross evaluation of
    shape ``(len(i_array), len(j_array))``. One full row and one full column
    are evaluated per accepted cross.

    Pivoting rules: the column pivot is the largest residual-row entry over
    unused columns, ties to the lowest index; the next row pivot is the
    largest residual-column entry over unused rows. A row whose residual
    vanishes identically is skipped; once every row has been consumed or
    skipped the block is declared converged (this covers exactly low-rank
    and zero blocks). The iteration count never exceeds ``min(m, n)``.

    ``exact_norms=True`` replaces the running Frobenius estimate with the
    exact residual norm (the block is evaluated densely once); intended for
    validation, not production use.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    m, n = len(rows), len(cols)
    if m == 0 or n == 0:
        raise ValueError("empty row or column index set")
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    limit = min(m, n)
    if max_rank is not None:
        limit = min(limit, max_rank)

    dense = np.asarray(entry(rows, cols), dtype=complex) if exact_norms else None

    a_list: list[np.ndarray] = []  # residual columns, scaled
    b_list: list[np.ndarray] = []  # residual rows
    row_used = np.zeros(m, dtype=bool)
    col_used = np.zeros(n, dtype=bool)
    frob2 = 0.0
    converged = False
    next_row = 0

    while len(a_list) < limit:
        # Hunt for a usable pivot row; rows with an identically zero
        # residual are consumed without producing a cross.
        b = None
        while True:
            if next_row is None or row_used.all():
                converged = True
                break
            i = next_row
            b = np.asarray(entry(rows[i : i + 1], cols), dtype=complex).ravel()
            for a_vec, b_vec in zip(a_list, b_list):
                b = b - a_vec[i] * b_vec
            row_used[i] = True
            b_search = np.where(col_used, 0.0, np.abs(b))
            j = int(np.argmax(b_search))
            if b_search[j] > 0.0:
                break
            # Skipped row: move to the unused row where the last residual
            # column was largest, or just the next index if none exists yet.
            next_row = _next_unused_row(row_used, a_list[-1] if a_list else None)
            b = None
        if converged or b is None:
            break

        a = np.asarray(entry(rows, cols[j : j + 1]), dtype=complex).ravel()
        for a_vec, b_vec in zip(a_list, b_list):
            a = a - b_vec[j] * a_vec
        a = a / b[j]
        col_used[j] = True

        na2 = float(np.vdot(a, a).real)
        nb2 = float(np.vdot(b, b).real)
        cross = 0.0
        for a_vec, b_vec in zip(a_list, b_list):
            cross += (np.vdot(a_vec, a) * np.vdot(b, b_vec)).real
        frob2 = max(frob2 + 2.0 * cross + na2 * nb2, 0.0)
        a_list.append(a)
        b_list.append(b)

        if exact_norms:
            approx = np.zeros((m, n), dtype=complex)
            for a_vec, b_vec in zip(a_list, b_list):
                approx += np.outer(a_vec, b_vec)
            resid = np.linalg.norm(dense - approx)
            if resid <= tol * max(np.linalg.norm(dense), 1e-300):
                converged = True
                break
        elif na2 * nb2 <= tol * tol * frob2:
            converged = True
            break

        next_row = _next_unused_row(row_used, a)
        if next_row is None:
            converged = True
            break

    rank = len(a_list)
    U = np.empty((m, rank), dtype=complex)
    V = np.empty((n, rank), dtype=complex)
    for idx, (a_vec, b_vec) in enumerate(zip(a_list, b_list)):
        U[:, idx] = a_vec
        V[:, idx] = np.conj(b_vec)
    return ACAResult(U=U, V=V, converged=converged, frob_estimate=float(np.sqrt(frob2)))


def _next_unused_row(row_used: np.ndarray, last_col: np.ndarray | None) -> int | None:
    unused = np.flatnonzero(~row_used)
    if len(unused) == 0:
        return None
    if last_col is None:
        return int(unused[0])
    return int(unused[np.argmax(np.abs(last_col[unused]))])
