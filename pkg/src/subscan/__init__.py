"""Subset scanning over neural-network activations.

Scores individual samples against a clean background distribution with
nonparametric scan statistics and finds the most anomalous subset of nodes
in O(J log J) time.
"""

from subscan.io import (
    ActivationFormatError,
    ActivationMatrix,
    BackgroundModel,
    CorruptFileError,
    FormatVersionError,
    build_background,
    load_matrix,
    load_model,
    save_matrix,
    save_model,
    truncate_and_flatten,
    truncate_jointly,
)
from subscan.ltss import ScanConfig, ScanResult, brute_force_scan, filter_by_alpha_max, scan_sample
from subscan.npss import SCORERS, berk_jones, get_scorer, higher_criticism, kl_bernoulli
from subscan.pvalues import PValueVector, empirical_pvalue, pvalues_for_matrix, pvalues_for_sample

__version__ = "0.1.0"

__all__ = [
    "ActivationFormatError",
    "ActivationMatrix",
    "BackgroundModel",
    "CorruptFileError",
    "FormatVersionError",
    "PValueVector",
    "SCORERS",
    "ScanConfig",
    "ScanResult",
    "berk_jones",
    "brute_force_scan",
    "build_background",
    "empirical_pvalue",
    "filter_by_alpha_max",
    "get_scorer",
    "higher_criticism",
    "kl_bernoulli",
    "load_matrix",
    "load_model",
    "pvalues_for_matrix",
    "pvalues_for_sample",
    "save_matrix",
    "save_model",
    "scan_sample",
    "truncate_and_flatten",
    "truncate_jointly",
]
