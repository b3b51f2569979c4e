"""Functional depths: integrated halfspace depth, modified band depth and revised depths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..fdata import CompleteCurves, Grid
from .halfspace import DEFAULT_NDIRS, pointwise_depth, tie_counts

__all__ = [
    "DepthError",
    "DepthReport",
    "WeightScheme",
    "MFHD",
    "depth_ranks",
    "mfhd",
    "mbd",
    "revised_depth",
    "time_weights",
]

METHODS = (
    "mbd",
    "mfhd",
    "mfhd_true",
    "mfhd_mfpca",
    "mfhd_bmfpca",
    "rmfhd_aw",
    "rmfhd_naw",
    "rmfhd_dm",
)


class DepthError(ValueError):
    """Depth cannot be computed for the given input."""


def depth_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks with 1 for the deepest curve; ties go to the lower index."""
    values = np.asarray(values, dtype=float)
    order = np.lexsort((np.arange(values.size), -values))
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[order] = np.arange(1, values.size + 1)
    return ranks


@dataclass(frozen=True, eq=False)
class DepthReport:
    """Depth values in [0, 1] and induced ranks for one method."""

    method: str
    values: np.ndarray
    ranks: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise DepthError("depth values must lie in [0, 1]")
        v = np.clip(v, 0.0, 1.0)
        object.__setattr__(self, "values", v)
        r = depth_ranks(v) if self.ranks is None else np.asarray(self.ranks, dtype=np.int64)
        if not np.array_equal(np.sort(r), np.arange(1, v.size + 1)):
            raise DepthError("ranks must be a permutation of 1..n")
        object.__setattr__(self, "ranks", r)

    @property
    def n(self) -> int:
        return self.values.size

    def order(self) -> np.ndarray:
        """Subject indices from deepest to least deep."""
        return np.argsort(self.ranks, kind="stable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, DepthReport):
            return NotImplemented
        return (
            self.method == other.method
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.ranks, other.ranks)
        )

    __hash__ = None


@dataclass(frozen=True)
class WeightScheme:
    """Time weights of the integrated depth.

    ``constant`` gives each grid point the width of its cell. ``volume``
    additionally scales by the volume of the central region made of sample
    points whose depth is at least ``beta`` (default ``ceil(0.25 n) / n``).
    """

    kind: Literal["constant", "volume"] = "constant"
    beta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("constant", "volume"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.beta is not None and not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")


def _as_array(curves) -> tuple[np.ndarray, Optional[Grid]]:
    if isinstance(curves, CompleteCurves):
        return curves.values, curves.grid
    X = np.asarray(curves, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise DepthError("curves must have shape (n, p, G) or (n, G)")
    if not np.all(np.isfinite(X)):
        raise DepthError("curves must be finite")
    return X, None


def _region_volume(pts: np.ndarray, depth: np.ndarray, beta: float) -> float:
    sel = pts[depth >= beta - 1e-12]
    p = pts.shape[1]
    if sel.shape[0] == 0:
        return 0.0
    if p == 1:
        return float(sel.max() - sel.min())
    if sel.shape[0] <= p:
        return 0.0
    try:
        return float(ConvexHull(sel).volume)
    except QhullError:
        return 0.0


def time_weights(
    X: np.ndarray,
    grid: Optional[Grid] = None,
    scheme: WeightScheme = WeightScheme(),
    depth_at: Optional[np.ndarray] = None,
    ndirs: int = DEFAULT_NDIRS,
) -> np.ndarray:
    """Normalized time weights ``W_c`` summing to one.

    Parameters
    ----------
    X : ndarray of shape (n, p, G)
    grid : Grid, optional
        Defaults to equidistant points.
    scheme : WeightScheme
    depth_at : ndarray of shape (G, n), optional
        Pointwise depths of the sample itself, reused for volume weights.
    """
    n, p, G = X.shape
    grid = grid if grid is not None else Grid.equidistant(G)
    widths = grid.cell_widths()
    if scheme.kind == "constant":
        w = widths
    else:
        beta = scheme.beta if scheme.beta is not None else math.ceil(0.25 * n) / n
        if depth_at is None:
            depth_at = pointwise_depth(np.transpose(X, (2, 0, 1)), ndirs=ndirs)
        vol = np.array([_region_volume(X[:, :, c], depth_at[c], beta) for c in range(G)])
        w = vol * widths
        if w.sum() <= 0:
            raise DepthError(
                f"central region of depth >= {beta:g} is empty at every time point; use a smaller beta"
            )
    return w / w.sum()


def mfhd(
    curves,
    weights: WeightScheme = WeightScheme(),
    ndirs: int = DEFAULT_NDIRS,
    seed: int = 0,
    method: str = "mfhd",
    grid: Optional[Grid] = None,
) -> DepthReport:
    """Integrated halfspace depth of every curve within the sample.

    Parameters
    ----------
    curves : CompleteCurves or ndarray of shape (n, p, G)
    weights : WeightScheme
    ndirs : int
        Directions for pointwise depth when ``p >= 3``.
    seed : int
        Seed of the direction set.
    method : str
        Tag stored in the report.
    grid : Grid, optional
        Time grid for array input.
    """
    X, g = _as_array(curves)
    g = g if g is not None else grid
    D = pointwise_depth(np.transpose(X, (2, 0, 1)), ndirs=ndirs, seed=seed)  # (G, n)
    W = time_weights(X, g, weights, depth_at=D, ndirs=ndirs)
    return DepthReport(method, W @ D)


def mbd(curves, method: str = "mbd") -> DepthReport:
    """Modified band depth with bands formed by pairs of distinct curves.

    Each pair of curves defines a closed pointwise band. The depth of a curve
    is the fraction of (pair, time) combinations whose band contains it.
    """
    X = np.asarray(curves.values if isinstance(curves, CompleteCurves) else curves, dtype=float)
    if X.ndim == 3:
        if X.shape[1] != 1:
            raise DepthError("modified band depth is univariate")
        X = X[:, 0, :]
    n = X.shape[0]
    if n < 2:
        raise DepthError("modified band depth needs at least 2 curves")
    le, lt = (a.T for a in tie_counts(X.T))
    above = n - le  # strictly above
    below = lt  # strictly below
    pairs = n * (n - 1) / 2
    outside = (above * (above - 1) + below * (below - 1)) / 2
    return DepthReport(method, np.mean(1.0 - outside / pairs, axis=1))


def revised_depth(
    fit,
    upper,
    lower,
    variant: Literal["aw", "naw", "dm"] = "aw",
    weights: WeightScheme = WeightScheme(),
    ndirs: int = DEFAULT_NDIRS,
    seed: int = 0,
    grid: Optional[Grid] = None,
) -> DepthReport:
    """Depth that accounts for the pointwise uncertainty of fitted curves.

    ``aw`` and ``naw`` evaluate the fit and both bounds of every curve against
    the pooled set of all ``3n`` curves and combine the three depths with
    weights ``(1/3, 1/3, 1/3)`` or ``(1/2, 1/4, 1/4)``. ``dm`` is the
    integrated depth of the ``2p``-variate curves stacking upper and lower bounds.
    """
    F, g = _as_array(fit)
    Ub, _ = _as_array(upper)
    Lb, _ = _as_array(lower)
    g = g if g is not None else grid
    if F.shape != Ub.shape or F.shape != Lb.shape:
        raise DepthError("fit, upper and lower curves must share one shape")
    if np.any(Ub < Lb):
        raise DepthError("upper bound below lower bound")
    n = F.shape[0]
    if variant in ("aw", "naw"):
        pooled = np.concatenate([F, Ub, Lb], axis=0)
        d = mfhd(pooled, weights, ndirs, seed, grid=g).values
        w = (1 / 3, 1 / 3, 1 / 3) if variant == "aw" else (0.5, 0.25, 0.25)
        vals = w[0] * d[:n] + w[1] * d[n : 2 * n] + w[2] * d[2 * n :]
    elif variant == "dm":
        vals = mfhd(np.concatenate([Ub, Lb], axis=1), weights, ndirs, seed, grid=g).values
    else:
        raise ValueError(f"unknown revised depth variant {variant!r}")
    return DepthReport(f"rmfhd_{variant}", vals)


class MFHD(BaseEstimator):
    """Integrated halfspace depth with respect to a fitted reference sample.

    Parameters
    ----------
    weights : {'constant', 'volume'}, default='constant'
    beta : float, optional
        Depth level of the central region for volume weights.
    ndirs : int, default=500
    seed : int, default=0
    """

    def __init__(
        self,
        weights: str = "constant",
        beta: Optional[float] = None,
        ndirs: int = DEFAULT_NDIRS,
        seed: int = 0,
    ):
        self.weights = weights
        self.beta = beta
        self.ndirs = ndirs
        self.seed = seed

    def fit(self, X, y=None):
        A, g = _as_array(X)
        self.reference_ = A
        self.grid_ = g if g is not None else Grid.equidistant(A.shape[2])
        D = pointwise_depth(np.transpose(A, (2, 0, 1)), ndirs=self.ndirs, seed=self.seed)
        self.weights_ = time_weights(A, self.grid_, WeightScheme(self.weights, self.beta), D, self.ndirs)
        self.depth_ = self.weights_ @ D
        return self

    def score_samples(self, X) -> np.ndarray:
        """Depth of each curve of ``X`` relative to the reference sample."""
        check_is_fitted(self, "reference_")
        A, _ = _as_array(X)
        if A.shape[1:] != self.reference_.shape[1:]:
            raise DepthError("query curves must match the reference in variables and grid")
        D = pointwise_depth(
            np.transpose(self.reference_, (2, 0, 1)),
            np.transpose(A, (2, 0, 1)),
            ndirs=self.ndirs,
            seed=self.seed,
        )
        return self.weights_ @ D

    def report(self, method: str = "mfhd") -> DepthReport:
        check_is_fitted(self, "reference_")
        return DepthReport(method, self.depth_)
