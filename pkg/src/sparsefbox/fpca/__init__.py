"""Functional principal component analysis for sparse samples."""

from .bootstrap import bmfpca_fit
from .mfpca import MFPCA, FitResult, ci_multiplier, fit_mfpca, fit_ufpca, mfpca_fit_curves
from .smoothing import SmoothingError
from .ufpca import UFPCA, FPCAError

__all__ = [
    "UFPCA",
    "MFPCA",
    "FitResult",
    "FPCAError",
    "SmoothingError",
    "bmfpca_fit",
    "ci_multiplier",
    "fit_mfpca",
    "fit_ufpca",
    "mfpca_fit_curves",
]
