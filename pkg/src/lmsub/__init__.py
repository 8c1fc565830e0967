"""Canonical-correlation bounds and subsampling inference for long-memory
Gaussian and Gaussian-subordinated time series."""
from .models import (Farima0d0, FarimaPdq, Fgn, Product, WhiteNoise, CovarianceModel,
                     MemoryParam, ModelError, SubordinationMap, hermite_rank, model_from_dict,
                     spectral_density)
from .cancorr import canonical_correlation, canonical_correlation_rect, block_sum_corr, rho_curve
from .bounds import (crude_bound, bw_bound, farima_bound, main_bound, calibrate_constant,
                     subsampling_condition_diag)
from .simulate import PathRequest, gen_gaussian, gen_subordinated, gen_stochvol, derive_seed
from .subsample import (BlockStatistic, SubsampleDistribution, sliding_blocks_eval, subsample_ci,
                        ecdf_band, m_estimate, sample_autocov, mc_coverage, mc_variance_check)

__version__ = "0.1.0"

__all__ = [
    "Farima0d0", "FarimaPdq", "Fgn", "Product", "WhiteNoise", "CovarianceModel", "MemoryParam",
    "ModelError", "SubordinationMap", "hermite_rank", "model_from_dict", "spectral_density",
    "canonical_correlation", "canonical_correlation_rect", "block_sum_corr", "rho_curve",
    "crude_bound", "bw_bound", "farima_bound", "main_bound", "calibrate_constant",
    "subsampling_condition_diag", "PathRequest", "gen_gaussian", "gen_subordinated",
    "gen_stochvol", "derive_seed", "BlockStatistic", "SubsampleDistribution",
    "sliding_blocks_eval", "subsample_ci", "ecdf_band", "m_estimate", "sample_autocov",
    "mc_coverage", "mc_variance_check",
]
