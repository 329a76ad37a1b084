"""LMI assembly over named matrix variables."""

from .affine import AffineExpr, LmiBlock, MatrixVariable, bmat, block_diag, dump_blocks
from .analysis import (
    assemble_dissipativity,
    assemble_dual,
    assemble_energy_to_peak,
    assemble_robust_performance,
    assemble_robust_stability,
    assemble_stability,
    strict_margin,
)
from .index import Supply, decompose_R, invert_index, l2_supply
from .lfr import (
    LfrFamily,
    LfrSystem,
    MultiplierClass,
    UncertainPlant,
    Uncertainty,
    augment_index,
    augment_supply,
)
from .synthesis import assemble_dual_synthesis, assemble_robust_synthesis, assemble_synthesis

__all__ = [
    "AffineExpr",
    "LmiBlock",
    "MatrixVariable",
    "bmat",
    "block_diag",
    "dump_blocks",
    "assemble_dissipativity",
    "assemble_dual",
    "assemble_energy_to_peak",
    "assemble_robust_performance",
    "assemble_robust_stability",
    "assemble_stability",
    "strict_margin",
    "Supply",
    "decompose_R",
    "invert_index",
    "l2_supply",
    "LfrFamily",
    "LfrSystem",
    "MultiplierClass",
    "UncertainPlant",
    "Uncertainty",
    "augment_index",
    "augment_supply",
    "assemble_dual_synthesis",
    "assemble_robust_synthesis",
    "assemble_synthesis",
]
