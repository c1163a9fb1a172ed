"""Gaussian processes, Pareto utilities, hypervolume and EHVI, plus the EHVI/TSEMO samplers."""

from .ehvi import argmax_ehvi, ehvi, ehvi_from_posterior, hv_improvement, nondominated_cells
from .gp import GaussianProcess, gp_fit, gp_predict, se_kernel
from .pareto import (ParetoFront, dominance_matrix, dominates, front_ranks, hypervolume,
                     non_dominated_sort, pareto_mask, to_minimization)
from .samplers import EHVISampler, TSEMOSampler, reference_point, sample_ehvi, sample_tsemo

__all__ = [
    "EHVISampler", "GaussianProcess", "ParetoFront", "TSEMOSampler", "argmax_ehvi",
    "dominance_matrix", "dominates", "ehvi", "ehvi_from_posterior", "front_ranks", "gp_fit",
    "gp_predict", "hv_improvement", "hypervolume", "non_dominated_sort", "nondominated_cells",
    "pareto_mask", "reference_point", "sample_ehvi", "sample_tsemo", "se_kernel", "to_minimization",
]
