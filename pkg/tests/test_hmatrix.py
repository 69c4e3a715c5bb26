"""H-matrix assembly, application, agglomeration, and structure dumps."""

import numpy as np

from cloakforge.hmat import agglomerate, assemble_hmatrix, build_cluster_tree
from cloakforge.hmat.hmatrix import ADMISSIBLE, INADMISSIBLE, SUBDIVIDED

from helpers import circle_segments, helmholtz_entry, line_segments


def circle_problem(n, n_min=16, k=0.2, radius=10.0):
    segs = circle_segments(n, radius=radius)
    mids = segs.mean(axis=1)
    tree = build_cluster_tree(segs, n_min=n_min)
    entry = helmholtz_entry(mids, k=k, shift=1.0 + 0.0j)
    return tree, entry, mids


def test_single_leaf_geometry_gives_one_dense_block():
    segs = line_segments(4)
    tree = build_cluster_tree(segs, n_min=8)
    entry = helmholtz_entry(segs.mean(axis=1), k=1.0, shift=2.0)
    hm = assemble_hmatrix(entry, tree, tree, eta=2.0, tol=1e-6)
    assert hm.root.status == INADMISSIBLE
    np.testing.assert_array_equal(hm.to_dense(), entry(np.arange(4), np.arange(4)))


def test_separated_clusters_compress():
    # Two circles far apart: the cross blocks must compress to low rank.
    near = circle_segments(50, radius=1.0, center=(0.0, 0.0))
    far = circle_segments(50, radius=1.0, center=(40.0, 0.0))
    segs = np.concatenate([near, far])
    mids = segs.mean(axis=1)
    tree = build_cluster_tree(segs, n_min=25)
    entry = helmholtz_entry(mids, k=0.5, shift=1.0)
    hm = assemble_hmatrix(entry, tree, tree, eta=2.0, tol=1e-6)
    cross = [
        b for b in hm.leaf_blocks()
        if b.status == ADMISSIBLE and b.shape == (50, 50)
    ]
    assert cross, "expected admissible 50x50 cross blocks"
    assert all(b.rank < 15 for b in cross)


def test_reconstruction_error_and_matvec():
    tree, entry, _ = circle_problem(300)
    hm = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5)
    dense = entry(np.arange(300), np.arange(300))
    err = np.linalg.norm(hm.to_dense() - dense) / np.linalg.norm(dense)
    assert err <= 10 * 1e-5
    rng = np.random.default_rng(3)
    x = rng.normal(size=300) + 1j * rng.normal(size=300)
    np.testing.assert_allclose(hm.matvec(x), dense @ x, rtol=0, atol=5e-4 * np.abs(dense @ x).max())
    # Batched application agrees with per-column application up to BLAS
    # reduction-order noise.
    X = rng.normal(size=(300, 3)) + 1j * rng.normal(size=(300, 3))
    Y = hm.matvec(X)
    for q in range(3):
        np.testing.assert_allclose(Y[:, q], hm.matvec(X[:, q]), rtol=0, atol=1e-12)


def test_leaves_partition_index_space():
    tree, entry, _ = circle_problem(257)  # odd size: uneven splits
    hm = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5)
    bitmap = np.zeros((257, 257), dtype=int)
    for b in hm.leaf_blocks():
        bitmap[b.row.lo : b.row.hi, b.col.lo : b.col.hi] += 1
    assert bitmap.min() == 1 and bitmap.max() == 1


def test_worker_count_does_not_change_content():
    tree, entry, _ = circle_problem(200)
    h1 = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5, workers=1)
    h4 = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5, workers=4)
    np.testing.assert_array_equal(h1.to_dense(), h4.to_dense())


def test_compressed_storage_beats_dense_on_circle():
    tree, entry, _ = circle_problem(600)
    hm = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5)
    assert hm.stored_scalars() < hm.dense_scalars()


def test_block_dump_format():
    tree, entry, _ = circle_problem(128, n_min=32)
    hm = assemble_hmatrix(entry, tree, tree, eta=128.0, tol=1e-5)
    text = hm.dump_blocks()
    lines = text.strip().splitlines()
    assert lines, "dump must not be empty"
    statuses = set()
    for line in lines:
        parts = line.split()
        assert len(parts) == 7
        level, rlo, rhi, clo, chi = map(int, parts[:5])
        status, rank = parts[5], int(parts[6])
        assert status in (ADMISSIBLE, INADMISSIBLE, SUBDIVIDED)
        assert 0 <= rlo < rhi <= 128 and 0 <= clo < chi <= 128
        assert level >= 0 and rank >= 0
        statuses.add(status)
    assert lines[0].split()[5] == SUBDIVIDED  # root comes first


def test_agglomeration_merges_uniform_line_quartets():
    # Two separated uniform lines with a strict admissibility constant: the
    # line-to-line block is subdivided once into four admissible children,
    # which the agglomeration pass can then merge back into one block.
    a = line_segments(64, length=1.0)
    b = line_segments(64, length=1.0)
    b[:, :, 0] += 10.0
    segs = np.concatenate([a, b])
    tree = build_cluster_tree(segs, n_min=8)
    entry = helmholtz_entry(segs.mean(axis=1), k=0.3, shift=1.0)
    hm = assemble_hmatrix(entry, tree, tree, eta=0.08, tol=1e-6)
    before = hm.stored_scalars()
    ranks_before = {
        (b.row.lo, b.row.hi, b.col.lo, b.col.hi): b.rank
        for b in hm.leaf_blocks() if b.status == ADMISSIBLE
    }
    merges = agglomerate(hm)
    assert merges >= 1
    assert hm.stored_scalars() < before
    dense = entry(np.arange(128), np.arange(128))
    err = np.linalg.norm(hm.to_dense() - dense) / np.linalg.norm(dense)
    assert err <= 10 * 1e-6
    # Merged blocks keep low rank: never more than the sum of the ranks of
    # the children they replaced (the stacked factorization before rounding).
    for blk in hm.leaf_blocks():
        if blk.status == ADMISSIBLE:
            key = (blk.row.lo, blk.row.hi, blk.col.lo, blk.col.hi)
            if key not in ranks_before:
                children = [
                    r for (rlo, rhi, clo, chi), r in ranks_before.items()
                    if key[0] <= rlo and rhi <= key[1] and key[2] <= clo and chi <= key[3]
                ]
                assert children and blk.rank <= sum(children)


def test_agglomeration_of_zero_blocks_gives_rank_zero():
    a = line_segments(32, length=1.0)
    b = line_segments(32, length=1.0)
    b[:, :, 0] += 10.0
    segs = np.concatenate([a, b])
    tree = build_cluster_tree(segs, n_min=4)

    def entry(I, J):
        return np.zeros((len(I), len(J)), dtype=complex)

    hm = assemble_hmatrix(entry, tree, tree, eta=2.0, tol=1e-6)
    agglomerate(hm)
    for blk in hm.leaf_blocks():
        if blk.status == ADMISSIBLE:
            assert blk.rank == 0
    assert np.abs(hm.to_dense()).max() == 0.0
