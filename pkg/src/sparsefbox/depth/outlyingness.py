"""Directional outlyingness screening of multivariate curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.stats import chi2, f as f_dist
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.covariance import MinCovDet

from ..fdata import Grid
from .functional import DepthError, _as_array
from .halfspace import DEFAULT_NDIRS, unit_directions

__all__ = ["OutlyingnessReport", "DirectionalOutlyingness", "directional_outlyingness"]

DEFAULT_CUTOFF_Q = 0.993


def hardin_rocke(n: int, d: int) -> tuple[float, float]:
    """Consistency factor ``c`` and degrees of freedom ``m`` of the scaled-F law.

    The squared robust distances of a raw half-sample minimum covariance
    determinant estimate satisfy approximately
    ``c (m - d + 1) / (d m) * RD^2 ~ F(d, m - d + 1)``.
    """
    h = (n + d + 1) // 2
    a = h / n
    q = chi2.ppf(a, d)
    c = chi2.cdf(q, d + 2) / a
    c2 = -chi2.cdf(q, d + 2) / 2
    c3 = -chi2.cdf(q, d + 4) / 2
    c4 = 3 * c3
    b1 = c * (c3 - c4) / (1 - a)
    b2 = 0.5 + c / (1 - a) * (c3 - q / d * (c2 + (1 - a) / 2))
    v1 = (1 - a) * b1**2 * (a * (c * q / d - 1) ** 2 - 1) - 2 * c3 * c**2 * (
        3 * (b1 - d * b2) ** 2 + (d + 2) * b2 * (2 * b1 - d * b2)
    )
    v2 = n * (b1 * (b1 - d * b2) * (1 - a)) ** 2 * c**2
    m_asy = 2 / (c**2 * v1 / v2)
    m = m_asy * np.exp(0.725 - 0.00663 * d - 0.0780 * np.log(n))
    return float(c), float(m)


@dataclass(frozen=True, eq=False)
class OutlyingnessReport:
    """Mean directional outlyingness ``mo`` (n, p), its variation ``vo`` (n,) and flags."""

    mo: np.ndarray
    vo: np.ndarray
    flagged: np.ndarray
    distance: Optional[np.ndarray] = None
    cutoff: float = np.inf

    def __post_init__(self):
        if np.any(np.asarray(self.vo) < 0):
            raise DepthError("variation of outlyingness must be nonnegative")
        object.__setattr__(self, "flagged", np.asarray(self.flagged, dtype=bool))

    @property
    def n(self) -> int:
        return self.flagged.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutlyingnessReport):
            return NotImplemented
        return (
            np.array_equal(self.mo, other.mo)
            and np.array_equal(self.vo, other.vo)
            and np.array_equal(self.flagged, other.flagged)
        )

    __hash__ = None


def _robust_scale(proj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    med = np.median(proj, axis=-1, keepdims=True)
    mad = np.median(np.abs(proj - med), axis=-1, keepdims=True)
    # degenerate scale rule
    mad = np.where(mad > 0, mad, 1e-8 * (1.0 + np.abs(med)))
    return med, mad


def pointwise_outlyingness(X: np.ndarray, ndirs: int = DEFAULT_NDIRS, seed: int = 0) -> np.ndarray:
    """Directional outlyingness ``O(t_c)`` of every curve, shape ``(n, p, G)``.

    The magnitude is the Stahel-Donoho outlyingness (largest robustly
    standardized projection, exact coordinatewise when ``p = 1``) and the
    direction is the unit vector from the coordinatewise median.
    """
    n, p, G = X.shape
    A = np.transpose(X, (2, 0, 1))  # (G, n, p)
    if p == 1:
        med, mad = _robust_scale(A[..., 0])
        sdo = np.abs(A[..., 0] - med) / mad
    else:
        U = unit_directions(p, ndirs, seed)
        pr = np.einsum("gnp,dp->gdn", A, U)
        med, mad = _robust_scale(pr)
        sdo = (np.abs(pr - med) / mad).max(axis=1)  # (G, n)
    centre = np.median(A, axis=1, keepdims=True)
    diff = A - centre
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    v = np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
    return np.transpose(sdo[..., None] * v, (1, 2, 0))


class DirectionalOutlyingness(OutlierMixin, BaseEstimator):
    """Flag curves whose mean and variation of directional outlyingness are extreme.

    Each curve is summarized by ``(MO, VO)`` where ``MO`` is the weighted
    time mean of its outlyingness vector and ``VO`` the weighted time mean of
    the squared deviation from ``MO``. A curve is flagged when the squared
    robust Mahalanobis distance of its summary (reweighted minimum
    covariance determinant estimate, made consistent at the normal law)
    exceeds a cutoff.

    Parameters
    ----------
    cutoff_q : float, default=0.993
        Quantile level of the cutoff; ``1`` disables flagging.
    cutoff_rule : {'f', 'chi2'}, default='f'
        ``'f'`` uses the scaled F approximation of Hardin and Rocke for
        distances based on the minimum covariance determinant; ``'chi2'`` the
        chi-square law with ``p + 1`` degrees of freedom.
    ndirs : int, default=500
    seed : int, default=0
        Seed of the projection directions and of the robust estimator.
    """

    def __init__(
        self,
        cutoff_q: float = DEFAULT_CUTOFF_Q,
        cutoff_rule: Literal["f", "chi2"] = "f",
        ndirs: int = DEFAULT_NDIRS,
        seed: int = 0,
    ):
        self.cutoff_q = cutoff_q
        self.cutoff_rule = cutoff_rule
        self.ndirs = ndirs
        self.seed = seed

    def fit(self, X, y=None, grid: Optional[Grid] = None):
        if not 0 < self.cutoff_q <= 1:
            raise ValueError("cutoff_q must lie in (0, 1]")
        A, g = _as_array(X)
        n, p, G = A.shape
        if n <= p + 1:
            raise DepthError(f"directional outlyingness needs more than p + 1 = {p + 1} curves")
        g = g if g is not None else (grid if grid is not None else Grid.equidistant(G))
        w = g.cell_widths() / g.cell_widths().sum()
        O = pointwise_outlyingness(A, self.ndirs, self.seed)
        mo = O @ w
        vo = np.sum(((O - mo[..., None]) ** 2).sum(axis=1) * w, axis=1)
        Y = np.column_stack([mo, vo])
        if self.cutoff_rule not in ("f", "chi2"):
            raise ValueError(f"unknown cutoff rule {self.cutoff_rule!r}")
        dist = self._distances(Y)
        cutoff = self._cutoff(n, p + 1)
        self.report_ = OutlyingnessReport(mo, vo, dist > cutoff, dist, cutoff)
        self.labels_ = np.where(self.report_.flagged, -1, 1)
        return self

    def _cutoff(self, n: int, d: int) -> float:
        if self.cutoff_q >= 1:
            return np.inf
        if self.cutoff_rule == "chi2":
            return float(chi2.ppf(self.cutoff_q, d))
        c, m = hardin_rocke(n, d)
        return float(f_dist.ppf(self.cutoff_q, d, m - d + 1) * d * m / (c * (m - d + 1)))

    def _distances(self, Y: np.ndarray) -> np.ndarray:
        if np.all(np.ptp(Y, axis=0) == 0):
            return np.zeros(Y.shape[0])
        scale = np.ptp(Y, axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        Ys = Y / scale
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mcd = MinCovDet(random_state=self.seed).fit(Ys)
        # consistency of the covariance reweighted on the 0.975 chi-square region
        d = Y.shape[1]
        q = chi2.ppf(0.975, d)
        return mcd.mahalanobis(Ys) * chi2.cdf(q, d + 2) / 0.975

    def fit_predict(self, X, y=None, **kwargs):
        return self.fit(X, **kwargs).labels_


def directional_outlyingness(
    curves,
    cutoff_q: float = DEFAULT_CUTOFF_Q,
    cutoff_rule: Literal["f", "chi2"] = "f",
    ndirs: int = DEFAULT_NDIRS,
    seed: int = 0,
    grid: Optional[Grid] = None,
) -> OutlyingnessReport:
    """Stage-one outlier screen by directional outlyingness.

    Parameters
    ----------
    curves : CompleteCurves or ndarray of shape (n, p, G)
    cutoff_q : float, default=0.993
        Quantile level of the cutoff; ``1`` disables flagging.
    cutoff_rule : {'f', 'chi2'}, default='f'
    ndirs : int, default=500
    seed : int, default=0
    grid : Grid, optional

    Returns
    -------
    OutlyingnessReport
    """
    return DirectionalOutlyingness(cutoff_q, cutoff_rule, ndirs, seed).fit(curves, grid=grid).report_
