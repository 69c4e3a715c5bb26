"""Rank-truncation primitives shared by agglomeration and H-LU arithmetic."""

from __future__ import annotations

import numpy as np
from scipy.linalg import qr, svd


def svd_recompress(
    U: np.ndarray, V: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    """Round the factorization U @ V^H to minimal rank at relative tol.

    QR-factors both sides, SVDs the small core R_U @ R_V^H, and keeps the
    leading singular values until the discarded tail is below
    ``tol * ||U V^H||_F``. With ``tol=0`` only exact zero singular values
    are dropped. Returns factors with the singular values absorbed into the
    left factor.
    """
    if U.shape[1] != V.shape[1]:
        raise ValueError("factor ranks disagree")
    k = U.shape[1]
    if k == 0:
        return U.copy(), V.copy()
    Qu, Ru = qr(U, mode="economic")
    Qv, Rv = qr(V, mode="economic")
    W, sig, Zh = svd(Ru @ Rv.conj().T)
    total2 = float(np.sum(sig**2))
    if total2 == 0.0:
        rank = 0
    else:
        tail2 = np.concatenate([np.cumsum((sig**2)[::-1])[::-1], [0.0]])
        # Smallest rank whose discarded tail meets the tolerance.
        rank = int(np.argmax(tail2 <= tol * tol * total2))
    Unew = Qu @ (W[:, :rank] * sig[:rank])
    Vnew = Qv @ Zh[:rank].conj().T
    return Unew, Vnew


def truncate_lowrank_sum(
    U1: np.ndarray,
    V1: np.ndarray,
    U2: np.ndarray,
    V2: np.ndarray,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Round U1 V1^H + U2 V2^H to minimal rank at relative tol."""
    return svd_recompress(
        np.hstack([U1, U2]), np.hstack([V1, V2]), tol
    )


def dense_to_lowrank(D: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Best low-rank factors of a dense block at relative Frobenius tol."""
    m, n = D.shape
    if min(m, n) == 0:
        return np.zeros((m, 0), dtype=complex), np.zeros((n, 0), dtype=complex)
    W, sig, Zh = svd(D, full_matrices=False)
    total2 = float(np.sum(sig**2))
    if total2 == 0.0:
        rank = 0
    else:
        tail2 = np.concatenate([np.cumsum((sig**2)[::-1])[::-1], [0.0]])
        rank = int(np.argmax(tail2 <= tol * tol * total2))
    return W[:, :rank] * sig[:rank], Zh[:rank].conj().T
