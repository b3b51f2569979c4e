"""Multivariate functional PCA built from univariate score matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..fdata import CompleteCurves, Grid, SparseSampleSet
from .ufpca import UFPCA, EIG_ZERO, FPCAError, conditional_scores, select_components

__all__ = ["MFPCA", "FitResult", "fit_ufpca", "fit_mfpca", "mfpca_fit_curves", "ci_multiplier"]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted curves with pointwise confidence bounds, each ``(n, p, G)``."""

    fitted: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    method: str
    B: int
    grid: Grid
    variance: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("fitted", "lower", "upper"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise FPCAError(f"non-finite values in {name}")
            object.__setattr__(self, name, a)
        if not (np.all(self.lower <= self.fitted) and np.all(self.fitted <= self.upper)):
            raise FPCAError("confidence bounds do not bracket the fit")

    def curves(self, which: str = "fitted") -> CompleteCurves:
        return CompleteCurves(getattr(self, which), self.grid)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


def ci_multiplier(alpha: float) -> float:
    """Two-sided standard normal quantile ``Phi^-1(1 - alpha / 2)``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(norm.ppf(1.0 - alpha / 2.0))


class MFPCA(TransformerMixin, BaseEstimator):
    """Multivariate functional PCA of a sparse sample.

    Each variable is first analysed by :class:`UFPCA`; the stacked score
    matrix ``Xi`` then yields ``Z = Xi' Xi / (n - 1)``, whose eigenvectors
    ``c_m`` combine the univariate eigenfunctions into multivariate ones.
    With a single variable ``Z`` is the diagonal of univariate eigenvalues,
    so the fit reduces exactly to the univariate one.

    Parameters
    ----------
    grid : Grid, optional
        Common evaluation grid; defaults to 50 points on the first variable's domain.
    pve : float, default=0.99
        Multivariate proportion of variance explained.
    pve_univariate : float, default=0.99
    bandwidth_mean, bandwidth_cov : float, optional
        Passed to every univariate fit.
    design : {'auto', 'sparse', 'dense'}, default='auto'
    bandwidth_select : {'fixed', 'cv'}, default='fixed'
    n_components : int, optional
        Fixed number of multivariate components.
    fit_scores : {'projection', 'conditional'}, default='projection'
        Scores used by the curve fit: ``Xi c_m`` or the best linear
        prediction of the multivariate scores given all variables. The
        interval variance is the conditional one in both cases.

    Attributes
    ----------
    univariate_ : list of UFPCA
    Xi_ : ndarray of shape (n, M_plus)
    Z_ : ndarray of shape (M_plus, M_plus)
    c_ : ndarray of shape (M_plus, M_plus)
        Eigenvectors of ``Z_`` in columns, in decreasing eigenvalue order.
    eigenvalues_ : ndarray of shape (M,)
    eigenfunctions_ : ndarray of shape (M, p, G)
    scores_ : ndarray of shape (n, M)
        ``Xi_ @ c_[:, :M]``.
    mean_ : ndarray of shape (p, G)
    noise_var_ : ndarray of shape (p,)
    """

    def __init__(
        self,
        grid: Optional[Grid] = None,
        pve: float = 0.99,
        pve_univariate: float = 0.99,
        bandwidth_mean: Optional[float] = None,
        bandwidth_cov: Optional[float] = None,
        design: Literal["auto", "sparse", "dense"] = "auto",
        bandwidth_select: Literal["fixed", "cv"] = "fixed",
        n_components: Optional[int] = None,
        fit_scores: Literal["projection", "conditional"] = "projection",
    ):
        self.grid = grid
        self.pve = pve
        self.pve_univariate = pve_univariate
        self.bandwidth_mean = bandwidth_mean
        self.bandwidth_cov = bandwidth_cov
        self.design = design
        self.bandwidth_select = bandwidth_select
        self.n_components = n_components
        self.fit_scores = fit_scores

    def fit(self, X: SparseSampleSet, y=None, sample_weight: Optional[np.ndarray] = None):
        if self.fit_scores not in ("projection", "conditional"):
            raise ValueError(f"unknown fit_scores {self.fit_scores!r}")
        if not 0 < self.pve <= 1:
            raise ValueError("pve must lie in (0, 1]")
        grid = self.grid if self.grid is not None else Grid.equidistant(50, *X.domains[0])
        n = X.n
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)

        uni = [
            UFPCA(
                grid=grid,
                variable=j,
                bandwidth_mean=self.bandwidth_mean,
                bandwidth_cov=self.bandwidth_cov,
                pve=self.pve_univariate,
                design=self.design,
                bandwidth_select=self.bandwidth_select,
            ).fit(X, sample_weight=sample_weight)
            for j in range(X.p)
        ]
        Xi = np.hstack([u.scores_ for u in uni]) if uni else np.zeros((n, 0))
        sizes = [u.n_components_ for u in uni]
        M_plus = Xi.shape[1]

        if X.p == 1:
            # a single variable is its own multivariate decomposition
            Z = np.diag(uni[0].eigenvalues_)
        else:
            denom = max(w.sum() - 1.0, 1.0)
            Z = (Xi * w[:, None]).T @ Xi / denom
            Z = 0.5 * (Z + Z.T)
        if M_plus:
            lam, c = np.linalg.eigh(Z)
            order = np.argsort(lam)[::-1]
            lam, c = lam[order], c[:, order]
            if lam[-1] < -1e-8 * max(lam[0], 1.0):
                raise FPCAError("score covariance is not positive semidefinite")
            lam = np.where(lam > EIG_ZERO, lam, 0.0)
        else:
            lam, c = np.zeros(0), np.zeros((0, 0))

        # multivariate eigenfunctions psi_m^(j) = Phi^(j)' c_m^(j)
        G = len(grid)
        blocks = np.split(np.arange(M_plus), np.cumsum(sizes)[:-1]) if uni else []
        psi_all = np.zeros((M_plus, X.p, G))
        for j, (u, idx) in enumerate(zip(uni, blocks)):
            if idx.size:
                psi_all[:, j, :] = c[idx].T @ u.eigenfunctions_
        # sign convention on the stacked grid vector
        for m in range(M_plus):
            flat = psi_all[m].ravel()
            nz = np.flatnonzero(np.abs(flat) > 1e-8 * max(np.abs(flat).max(), 1e-300))
            if nz.size and flat[nz[0]] < 0:
                psi_all[m] *= -1.0
                c[:, m] *= -1.0

        if self.n_components is not None:
            M = min(int(self.n_components), int(np.count_nonzero(lam > 0)))
        else:
            M = select_components(lam, self.pve)

        self.grid_ = grid
        self.univariate_ = uni
        self.block_sizes_ = sizes
        self.Xi_ = Xi
        self.Z_ = Z
        self.c_ = c
        self.all_eigenvalues_ = lam
        self.n_components_ = M
        self.eigenvalues_ = lam[:M].copy()
        self.eigenfunctions_ = psi_all[:M].copy()
        self.scores_ = Xi @ c[:, :M]
        self.mean_ = np.stack([u.mean_ for u in uni])
        self.noise_var_ = np.array([u.noise_var_ for u in uni])
        self.variable_names_ = tuple(X.variable_names)
        return self

    def transform(self, X: SparseSampleSet) -> np.ndarray:
        """Multivariate scores ``Xi c_m`` of the subjects of ``X``."""
        check_is_fitted(self, "eigenfunctions_")
        Xi = np.hstack([u.transform(X) for u in self.univariate_])
        return Xi @ self.c_[:, : self.n_components_]

    def conditional_scores(self, X: SparseSampleSet) -> tuple[np.ndarray, np.ndarray]:
        """Multivariate best linear predictions and their covariances ``Omega_i``."""
        check_is_fitted(self, "eigenfunctions_")
        obs = [X.variable(j) for j in range(X.p)]
        return conditional_scores(
            obs, X.n, self.grid_.points, self.mean_, self.eigenfunctions_,
            self.eigenvalues_, self.noise_var_,
        )

    def conditional_fit(self, X: SparseSampleSet) -> tuple[np.ndarray, np.ndarray]:
        """Conditional mean curves and pointwise conditional variances, each ``(n, p, G)``."""
        cs, Omega = self.conditional_scores(X)
        rho = cs if self.fit_scores == "conditional" else self.transform(X)
        psi = self.eigenfunctions_
        fitted = self.mean_[None] + (rho @ psi.reshape(psi.shape[0], -1)).reshape(
            (-1,) + psi.shape[1:]
        )
        flat = psi.reshape(psi.shape[0], -1)
        var = np.sum(flat * (Omega @ flat), axis=1).reshape(fitted.shape)
        return fitted, np.maximum(var, 0.0)

    def predict_curves(self, X: SparseSampleSet) -> np.ndarray:
        return self.conditional_fit(X)[0]


def fit_ufpca(sample: SparseSampleSet, j: int = 0, grid: Optional[Grid] = None, **opts) -> UFPCA:
    """Fit :class:`UFPCA` to variable ``j``."""
    return UFPCA(grid=grid, variable=j, **opts).fit(sample)


def fit_mfpca(sample: SparseSampleSet, grid: Optional[Grid] = None, **opts) -> MFPCA:
    """Fit :class:`MFPCA` to all variables of ``sample``."""
    return MFPCA(grid=grid, **opts).fit(sample)


def mfpca_fit_curves(
    model: MFPCA, sample: SparseSampleSet, alpha: float = 0.05
) -> FitResult:
    """Fitted curves and pointwise ``1 - alpha`` intervals for the subjects of ``sample``."""
    z = ci_multiplier(alpha)
    fitted, var = model.conditional_fit(sample)
    half = z * np.sqrt(var)
    return FitResult(fitted, fitted - half, fitted + half, alpha, "mfpca", 0, model.grid_, var)
