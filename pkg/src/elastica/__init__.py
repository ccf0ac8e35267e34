"""Elastic registration of functions and planar curves.

Square-root velocity geometry with two registration routes: quotient-space
estimation (slope-constrained dynamic programming and an iterative Karcher
mean) and Bayesian ambient-space estimation (Dirichlet warp priors, conjugate
concentration updates, Metropolis-within-Gibbs sampling, and simulated
tempering for multimodal posteriors), plus Procrustes shape analysis,
a Monte Carlo study harness, and chromatogram-style preprocessing.
"""

from .bayes import (
    McmcChain,
    ModelConfig,
    PosteriorSummary,
    gibbs_kappa,
    log_posterior_pairwise,
    log_prior_warp,
    register_multiple,
    register_pair,
    summarize,
)
from .dp import DpConfig, KarcherResult, elastic_distance, karcher_mean, optimal_warp
from .geometry import (
    Rotation,
    SampledFunction,
    Srvf,
    WarpFunction,
    identity_warp,
    karcher_mean_of_warps,
    l2_distance,
    l2_norm,
    rotation_align,
    srvf_inverse,
    srvf_transform,
    warp_action,
    warp_compose,
    warp_inverse,
)
from .ingest import Dataset, DatasetItem, baseline_and_smooth, load_functions, resample
from .procrustes import (
    PreShape,
    classify_nearest_mean,
    gpa_mean,
    helmert_submatrix,
    preshape,
    procrustes_distance,
)
from .simulation import StudyConfig, StudyResult, example_mean, run_study, sample_warp, simulate_sample
from .tempering import TemperingLadder, TuningReport, build_ladder, swap_step, tempered_register, tune

__version__ = "0.1.0"

__all__ = [
    "SampledFunction", "Srvf", "WarpFunction", "Rotation",
    "srvf_transform", "srvf_inverse", "warp_action", "warp_compose",
    "warp_inverse", "identity_warp", "l2_distance", "l2_norm",
    "rotation_align", "karcher_mean_of_warps",
    "DpConfig", "KarcherResult", "optimal_warp", "elastic_distance", "karcher_mean",
    "ModelConfig", "McmcChain", "PosteriorSummary", "log_prior_warp",
    "log_posterior_pairwise", "gibbs_kappa", "register_pair",
    "register_multiple", "summarize",
    "TemperingLadder", "TuningReport", "build_ladder", "swap_step",
    "tune", "tempered_register",
    "PreShape", "helmert_submatrix", "preshape", "procrustes_distance",
    "gpa_mean", "classify_nearest_mean",
    "StudyConfig", "StudyResult", "example_mean", "sample_warp",
    "simulate_sample", "run_study",
    "Dataset", "DatasetItem", "load_functions", "resample", "baseline_and_smooth",
]
