"""Block-wise association scanning of genotype blocks against many phenotypes."""
from .blocks import BlockPartition, LdBlock, Window, build_blocks, build_windows
from .cca import canonical_decomposition, cca_pvalue, score_block_cca, score_block_cca_single
from .data import (CovariateMatrix, GenotypeMatrix, PhenotypeMatrix, SnpMeta, align_samples, load_covariates,
                   load_genotypes, load_phenotypes, preprocess, qc_filter)
from .errors import BlockscanError, NumericalError, ParseError, RankDeficiencyError, ValidationError
from .results import BlockScore
from .scan import METHODS, make_method, run_scan, score_blocks
from .significance import empirical_power, genomewide_threshold, rank_blocks

__version__ = "0.1.0"

__all__ = [
    "BlockPartition", "BlockScore", "BlockscanError", "CovariateMatrix", "GenotypeMatrix", "LdBlock", "METHODS",
    "NumericalError", "ParseError", "PhenotypeMatrix", "RankDeficiencyError", "SnpMeta", "ValidationError",
    "Window", "align_samples", "build_blocks", "build_windows", "canonical_decomposition", "cca_pvalue",
    "empirical_power", "genomewide_threshold", "load_covariates", "load_genotypes", "load_phenotypes",
    "make_method", "preprocess", "qc_filter", "rank_blocks", "run_scan", "score_block_cca",
    "score_block_cca_single", "score_blocks",
]
