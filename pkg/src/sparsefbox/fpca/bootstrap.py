"""Bootstrap-corrected curve fits."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..fdata import Grid, SparseSampleSet
from .mfpca import MFPCA, FitResult, ci_multiplier
from .smoothing import SmoothingError
from .ufpca import FPCAError

__all__ = ["bmfpca_fit"]


def bmfpca_fit(
    sample: SparseSampleSet,
    grid: Optional[Grid] = None,
    B: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    resample_indices: Optional[Sequence[Sequence[int]]] = None,
    **mfpca_opts,
) -> FitResult:
    """Bootstrap-averaged conditional fit with corrected pointwise intervals.

    Subjects are resampled with replacement ``B`` times. For every resample
    the model is refitted and the conditional mean and variance of each
    ORIGINAL subject are computed under the refitted model. The fit is the
    average of the conditional means and the variance is the average
    conditional variance plus the between-resample variance of the
    conditional means.

    A resample is represented by multinomial subject weights, which is
    equivalent to refitting on the resample with duplicated subjects.

    Parameters
    ----------
    sample : SparseSampleSet
    grid : Grid, optional
    B : int, default=100
        Number of successful resamples.
    alpha : float, default=0.05
    seed : int, default=0
    resample_indices : sequence of index sequences, optional
        Explicit resamples (each of length ``n``), overriding the random draws.
    **mfpca_opts
        Passed to :class:`MFPCA`; the refits use conditional scores unless
        ``fit_scores`` is given.

    Raises
    ------
    FPCAError
        When more than ``10 B`` resamples fail to fit.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    z = ci_multiplier(alpha)
    n = sample.n
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    if resample_indices is not None:
        draws = [np.asarray(r, dtype=np.int64) for r in resample_indices]
        if len(draws) != B or any(d.shape != (n,) for d in draws):
            raise ValueError("resample_indices must hold B index vectors of length n")

    opts = {"fit_scores": "conditional", **mfpca_opts}
    fits, variances = [], []
    attempts = 0
    while len(fits) < B:
        attempts += 1
        if attempts > 10 * B:
            raise FPCAError(f"bootstrap failed: more than {10 * B} resamples could not be fitted")
        if resample_indices is not None:
            if attempts > B:
                raise FPCAError("a forced bootstrap resample could not be fitted")
            idx = draws[len(fits)]
        else:
            idx = rng.integers(0, n, size=n)
        weight = np.bincount(idx, minlength=n).astype(float)
        try:
            model = MFPCA(grid=grid, **opts).fit(sample, sample_weight=weight)
            mean_b, var_b = model.conditional_fit(sample)
        except (FPCAError, SmoothingError, np.linalg.LinAlgError):
            continue
        fits.append(mean_b)
        variances.append(var_b)

    fits = np.stack(fits)
    fitted = fits.mean(0)
    within = np.mean(variances, axis=0)
    between = fits.var(0, ddof=1) if B > 1 else np.zeros_like(fitted)
    var = within + between
    half = z * np.sqrt(var)
    return FitResult(fitted, fitted - half, fitted + half, alpha, "bmfpca", B, model.grid_, var)
