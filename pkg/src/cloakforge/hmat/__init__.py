"""Hierarchical matrix engine: clustering, ACA, agglomeration, H-LU."""

from .cluster import ClusterNode, ClusterTree, admissible, build_cluster_tree
from .aca import aca_approximate
from .lowrank import svd_recompress, truncate_lowrank_sum
from .hmatrix import BlockNode, HMatrix, agglomerate, assemble_hmatrix
from .hlu import HLUFactor, hlu_factorize, hlu_solve

__all__ = [
    "ClusterNode",
    "ClusterTree",
    "admissible",
    "build_cluster_tree",
    "aca_approximate",
    "svd_recompress",
    "truncate_lowrank_sum",
    "BlockNode",
    "HMatrix",
    "assemble_hmatrix",
    "agglomerate",
    "HLUFactor",
    "hlu_factorize",
    "hlu_solve",
]
