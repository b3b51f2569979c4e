"""Univariate functional PCA through conditional expectation."""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..fdata import Grid, SparseSampleSet
from .smoothing import SmoothingError, local_linear, local_linear_surface, rotated_diagonal

__all__ = ["UFPCA", "FPCAError", "interp_rows", "select_components"]

SIGMA2_FLOOR = 1e-8
EIG_ZERO = 1e-12


class FPCAError(ValueError):
    """Functional PCA cannot be fitted to the given sample."""


def interp_rows(F: np.ndarray, points: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation of grid functions ``F[..., G]`` at times ``t``."""
    k = np.clip(np.searchsorted(points, t, side="right") - 1, 0, points.size - 2)
    frac = (t - points[k]) / (points[k + 1] - points[k])
    frac = np.clip(frac, 0.0, 1.0)
    return F[..., k] * (1.0 - frac) + F[..., k + 1] * frac


def select_components(eigenvalues: np.ndarray, pve: float) -> int:
    """Smallest count whose cumulative share of the total reaches ``pve``."""
    lam = np.clip(eigenvalues, 0.0, None)
    total = lam.sum()
    if total <= EIG_ZERO:
        return 0
    share = np.cumsum(lam) / total
    k = int(np.searchsorted(share, pve - 1e-12) + 1)
    return min(k, int(np.count_nonzero(lam > EIG_ZERO)))


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so their first clearly nonzero coordinate is positive."""
    out = vecs.copy()
    for m in range(out.shape[1]):
        col = out[:, m]
        big = np.flatnonzero(np.abs(col) > 1e-8 * max(np.abs(col).max(), 1e-300))
        if big.size and col[big[0]] < 0:
            out[:, m] = -col
    return out


def subject_matrix(subj: np.ndarray, n: int) -> sparse.csr_matrix:
    """``(n, N)`` indicator mapping observations to their subjects."""
    N = subj.size
    return sparse.csr_matrix((np.ones(N), (subj, np.arange(N))), shape=(n, N))


class UFPCA(TransformerMixin, BaseEstimator):
    """Functional PCA of one variable of a sparse sample.

    The mean is a local linear smooth of the pooled observations and the
    covariance a local linear smooth of the raw cross-products with the
    diagonal excluded. The measurement-error variance is the average gap
    between the smoothed raw diagonal and the noise-free diagonal over the
    middle half of the domain; when that gap is not positive, the lag-zero
    intercept of the within-subject semivariogram is used instead. Scores are
    best linear predictions given each subject's observations.

    When every subject is observed at every grid point (a complete common
    design) the cross-sectional mean and covariance are used instead, with a
    narrow-bandwidth diagonal gap for the noise variance.

    Parameters
    ----------
    grid : Grid, optional
        Evaluation grid; defaults to 50 equidistant points on the variable's domain.
    variable : int, default=0
        Index of the variable to analyse.
    bandwidth_mean, bandwidth_cov : float, optional
        Smoothing bandwidths; default ``0.1`` times the domain length.
    pve : float, default=0.99
        Proportion of variance explained that fixes the number of components.
    n_components : int, optional
        Fixed number of components, overriding ``pve``.
    design : {'auto', 'sparse', 'dense'}, default='auto'
        Estimation route; 'auto' picks 'dense' for complete common designs.
    bandwidth_select : {'fixed', 'cv'}, default='fixed'
        With 'cv', the mean and covariance bandwidths are chosen by 5-fold
        cross-validation over subjects from a small candidate set.

    Attributes
    ----------
    mean_ : ndarray of shape (G,)
    eigenfunctions_ : ndarray of shape (n_components_, G)
        Orthonormal under trapezoid quadrature on ``grid_``.
    eigenvalues_ : ndarray of shape (n_components_,)
    noise_var_ : float
    scores_ : ndarray of shape (n, n_components_)
    covariance_ : ndarray of shape (G, G)
    """

    def __init__(
        self,
        grid: Optional[Grid] = None,
        variable: int = 0,
        bandwidth_mean: Optional[float] = None,
        bandwidth_cov: Optional[float] = None,
        pve: float = 0.99,
        n_components: Optional[int] = None,
        design: Literal["auto", "sparse", "dense"] = "auto",
        bandwidth_select: Literal["fixed", "cv"] = "fixed",
    ):
        self.grid = grid
        self.variable = variable
        self.bandwidth_mean = bandwidth_mean
        self.bandwidth_cov = bandwidth_cov
        self.pve = pve
        self.n_components = n_components
        self.design = design
        self.bandwidth_select = bandwidth_select

    # ------------------------------------------------------------------ fit
    def fit(self, X: SparseSampleSet, y=None, sample_weight: Optional[np.ndarray] = None):
        if not 0 < self.pve <= 1:
            raise ValueError("pve must lie in (0, 1]")
        if self.design not in ("auto", "sparse", "dense"):
            raise ValueError(f"unknown design {self.design!r}")
        j = self.variable
        lo, hi = X.domains[j]
        grid = self.grid if self.grid is not None else Grid.equidistant(50, lo, hi)
        pts = grid.points
        G = pts.size
        L = grid.length
        n = X.n
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise ValueError("sample_weight must be a nonnegative vector of length n")

        s, t, yv = X.variable(j)
        keep = w[s] > 0
        s, t, yv = s[keep], t[keep], yv[keep]
        if np.unique(s).size < 2:
            raise FPCAError(
                f"variable {X.variable_names[j]!r}: at least 2 subjects with observations are required"
            )

        if self.bandwidth_select == "cv":
            h_mu, h_cov = self._cv_bandwidths(s, t, yv, w, n, pts, L)
        else:
            h_mu = 0.1 * L if self.bandwidth_mean is None else float(self.bandwidth_mean)
            h_cov = 0.1 * L if self.bandwidth_cov is None else float(self.bandwidth_cov)
        if h_mu <= 0 or h_cov <= 0:
            raise ValueError("bandwidths must be positive")

        uniq, inv = np.unique(t, return_inverse=True)
        U = uniq.size
        E = np.zeros((n, U))
        O = np.zeros((n, U))
        O[s, inv] = 1.0
        design = self.design
        if design == "auto":
            on_grid = U == G and np.allclose(uniq, pts, rtol=0, atol=1e-12 * max(1.0, L))
            active = w > 0
            design = "dense" if on_grid and np.all(O[active].sum(1) == G) else "sparse"
        if design == "dense":
            on_grid = U == G and np.allclose(uniq, pts, rtol=0, atol=1e-12 * max(1.0, L))
            if not (on_grid and np.all(O[w > 0].sum(1) == G)):
                raise FPCAError("dense design requires every subject observed at every grid point")

        try:
            if design == "dense":
                mean, cov, sigma2 = self._dense_moments(s, inv, yv, w, n, pts, grid)
            else:
                mean, cov, sigma2 = self._sparse_moments(
                    s, inv, uniq, yv, w, n, E, O, pts, grid, h_mu, h_cov
                )
        except SmoothingError as exc:
            raise FPCAError(f"variable {X.variable_names[j]!r}: {exc}") from exc

        qw = grid.trapezoid_weights()
        lam, phi, k = self._eigen(cov, qw)

        self.grid_ = grid
        self.bandwidth_mean_ = h_mu
        self.bandwidth_cov_ = h_cov
        self.design_ = design
        self.mean_ = mean
        self.covariance_ = cov
        self.noise_var_ = float(max(sigma2, SIGMA2_FLOOR))
        self.all_eigenvalues_ = lam
        self.eigenvalues_ = lam[:k].copy()
        self.eigenfunctions_ = phi
        self.n_components_ = k
        self.scores_ = self.transform(X)
        return self

    def _eigen(self, cov, qw):
        sq = np.sqrt(qw)
        lam, vec = np.linalg.eigh(sq[:, None] * cov * sq[None, :])
        order = np.argsort(lam)[::-1]
        lam, vec = lam[order], vec[:, order]
        lam = np.where(lam > EIG_ZERO, lam, 0.0)
        if self.n_components is not None:
            k = min(int(self.n_components), int(np.count_nonzero(lam > 0)))
        else:
            k = select_components(lam, self.pve)
        phi = _sign_fix(vec[:, :k] / sq[:, None]).T  # rows are eigenfunctions
        return lam, phi, k

    def _dense_moments(self, s, inv, yv, w, n, pts, grid):
        G = pts.size
        Y = np.zeros((n, G))
        Y[s, inv] = yv
        active = w > 0
        wa = w[active]
        Ya = Y[active]
        mean = (wa @ Ya) / wa.sum()
        R = Ya - mean
        denom = max(wa.sum() - 1.0, 1.0)
        S = (R * wa[:, None]).T @ R / denom
        # noise from the gap between the raw diagonal and its anti-diagonal neighbours
        gap = np.diag(S) - _antidiagonal_intercepts(S, pts)
        sigma2 = _middle_mean(gap, grid)
        cov = S.copy()
        np.fill_diagonal(cov, np.diag(S) - max(sigma2, 0.0))
        return mean, 0.5 * (cov + cov.T), sigma2

    def _sparse_moments(self, s, inv, uniq, yv, w, n, E, O, pts, grid, h_mu, h_cov):
        ws = w[s]
        cnt = np.bincount(inv, weights=ws, minlength=uniq.size)
        ysum = np.bincount(inv, weights=ws * yv, minlength=uniq.size)
        both = np.concatenate([pts, uniq])
        mfit = local_linear(uniq, ysum, cnt, both, h_mu)
        mean, mu_obs = mfit[: pts.size], mfit[pts.size:]
        resid = yv - mu_obs[inv]
        E[s, inv] = resid
        cov = local_linear_surface(uniq, E, O, w, pts, h_cov)

        # raw diagonal, smoothed
        dsum = np.bincount(inv, weights=ws * resid * resid, minlength=uniq.size)
        diag_raw = local_linear(uniq, dsum, cnt, pts, h_cov)
        u, v, pc, pv = _offdiag_pairs(uniq, E, O, w)
        diag_free = rotated_diagonal(u, v, pc, pv, pts, h_cov)
        sigma2 = _middle_mean(diag_raw - diag_free, grid)
        if sigma2 <= 0:
            sigma2 = _nugget(s, uniq[inv], resid, ws, h_cov)
        return mean, cov, sigma2

    def _cv_bandwidths(self, s, t, yv, w, n, pts, L):
        cands = L * np.array([0.05, 0.075, 0.1, 0.15, 0.2, 0.3])
        rng = np.random.default_rng(0)
        folds = rng.permutation(n) % 5
        best_mu, best_err = None, np.inf
        for h in cands:
            err = 0.0
            try:
                for f in range(5):
                    tr = folds[s] != f
                    te = ~tr
                    if not te.any():
                        continue
                    uq, iv = np.unique(t[tr], return_inverse=True)
                    c = np.bincount(iv, weights=w[s[tr]])
                    ys = np.bincount(iv, weights=w[s[tr]] * yv[tr])
                    pred = local_linear(uq, ys, c, t[te], h)
                    err += float(np.sum(w[s[te]] * (yv[te] - pred) ** 2))
            except SmoothingError:
                continue
            if err < best_err:
                best_mu, best_err = h, err
        if best_mu is None:
            raise FPCAError("no candidate mean bandwidth gives a nonsingular fit")
        # covariance bandwidth: smallest singular-free candidate at least the mean one
        best_cov = best_mu
        return float(best_mu), float(best_cov)

    # ------------------------------------------------------------ transform
    def transform(self, X: SparseSampleSet) -> np.ndarray:
        """Conditional-expectation scores of the subjects of ``X``."""
        check_is_fitted(self, "eigenfunctions_")
        scores, _ = self.conditional_scores(X)
        return scores

    def conditional_scores(self, X: SparseSampleSet) -> tuple[np.ndarray, np.ndarray]:
        """Scores and their conditional covariances ``(n, k)``, ``(n, k, k)``."""
        check_is_fitted(self, "eigenfunctions_")
        s, t, yv = X.variable(self.variable)
        return blup(
            s, t, yv, X.n, self.grid_.points, self.mean_, self.eigenfunctions_,
            self.eigenvalues_, self.noise_var_,
        )

    def predict_curves(self, X: SparseSampleSet) -> np.ndarray:
        """Reconstructed curves on the grid, shape ``(n, G)``."""
        return self.mean_ + self.transform(X) @ self.eigenfunctions_


def _antidiagonal_intercepts(S: np.ndarray, pts: np.ndarray, width: int = 3) -> np.ndarray:
    """Noise-free diagonal of a raw grid covariance.

    Along the anti-diagonal ``S[k - m, k + m]``, ``m = 1..width``, the surface
    is fit as ``a + b v^2 + c v^4`` with ``v`` the half distance; ``a``
    estimates ``C(t_k, t_k)``. Rows too close to the boundary give NaN.
    """
    G = pts.size
    out = np.full(G, np.nan)
    for k in range(G):
        m = np.arange(1, min(width, k, G - 1 - k) + 1)
        if m.size < 3:
            continue
        v2 = (0.5 * (pts[k + m] - pts[k - m])) ** 2
        A = np.column_stack([np.ones(m.size), v2, v2 * v2])
        out[k] = np.linalg.lstsq(A, S[k - m, k + m], rcond=None)[0][0]
    return out


def _middle_mean(gap: np.ndarray, grid: Grid) -> float:
    pts = grid.points
    lo = grid.t_min + 0.25 * grid.length
    hi = grid.t_max - 0.25 * grid.length
    sel = (pts >= lo - 1e-12) & (pts <= hi + 1e-12)
    sel &= np.isfinite(gap)
    if sel.sum() < 2:
        return float(np.nanmean(gap)) if np.isfinite(gap).any() else 0.0
    return float(np.trapezoid(gap[sel], pts[sel]) / (pts[sel][-1] - pts[sel][0]))


def _nugget(s: np.ndarray, t: np.ndarray, resid: np.ndarray, ws: np.ndarray, h: float) -> float:
    """Semivariogram intercept of the residuals of consecutive visits.

    Half the squared difference of two residuals of one subject has
    expectation ``sigma^2`` plus a term vanishing with the lag, so its local
    linear fit at lag zero estimates the noise variance without the
    covariance smoother.
    """
    same = s[1:] == s[:-1]
    lag = (t[1:] - t[:-1])[same]
    half_sq = 0.5 * np.diff(resid)[same] ** 2
    wt = ws[1:][same]
    if np.unique(lag[lag < h]).size < 2:
        return 0.0
    try:
        return float(local_linear(lag, wt * half_sq, wt, np.zeros(1), h)[0])
    except SmoothingError:
        return 0.0


def _offdiag_pairs(uniq, E, O, w):
    """Aggregated off-diagonal raw products in rotated coordinates."""
    U = uniq.size
    if U <= 600:
        Ow = O * w[:, None]
        N = O.T @ Ow
        A = E.T @ (E * w[:, None])
        k, l = np.nonzero(N)
        off = k != l
        k, l = k[off], l[off]
        cnt, val = N[k, l], A[k, l]
    else:
        ks, ls, cs, vs = [], [], [], []
        for i in np.flatnonzero(w > 0):
            idx = np.flatnonzero(O[i])
            if idx.size < 2:
                continue
            a, b = np.meshgrid(idx, idx, indexing="ij")
            m = a != b
            ks.append(a[m])
            ls.append(b[m])
            cs.append(np.full(m.sum(), w[i]))
            vs.append(w[i] * E[i, a[m]] * E[i, b[m]])
        if not ks:
            raise SmoothingError("no subject has two distinct observation times")
        k, l = np.concatenate(ks), np.concatenate(ls)
        cnt, val = np.concatenate(cs), np.concatenate(vs)
    return 0.5 * (uniq[k] + uniq[l]), 0.5 * (uniq[l] - uniq[k]), cnt, val


def blup(s, t, yv, n, points, mean, phi, lam, sigma2):
    """Best linear predictions of univariate scores and their conditional covariances."""
    return conditional_scores(
        [(s, t, yv)], n, points, mean[None], phi[:, None, :], lam, np.array([sigma2])
    )


def conditional_scores(obs, n, points, means, psi, lam, sigma2):
    """Best linear predictions of scores given each subject's observations.

    Parameters
    ----------
    obs : list of (subject, time, value) arrays
        One triple per variable.
    n : int
        Number of subjects.
    points : ndarray of shape (G,)
    means : ndarray of shape (p, G)
    psi : ndarray of shape (k, p, G)
        Eigenfunctions on the grid.
    lam : ndarray of shape (k,)
        Score variances.
    sigma2 : ndarray of shape (p,)
        Measurement-error variances.

    Returns
    -------
    scores : ndarray of shape (n, k)
    omega : ndarray of shape (n, k, k)
        Conditional covariance ``V - V Psi' Sigma_Y^-1 Psi V`` in the
        equivalent form ``(V^-1 + Psi' D^-1 Psi)^-1``, where ``D`` adds the
        ridge ``max(1e-8, 1e-10 trace(Sigma_Y))`` to each noise variance.
    """
    k = lam.size
    if k == 0:
        return np.zeros((n, 0)), np.zeros((n, 0, 0))
    parts = []
    trace = np.zeros(n)
    for j, (s, t, yv) in enumerate(obs):
        # aggregate by distinct time: (n, U) count and residual-sum matrices
        uniq, inv = np.unique(t, return_inverse=True)
        U = uniq.size
        Phi = interp_rows(psi[:, j, :], points, uniq).T  # (U, k)
        r = yv - interp_rows(means[j], points, uniq)[inv]
        if n * U <= 4_000_000:
            C = np.zeros((n, U))
            C[s, inv] = 1.0
            Rs = np.zeros((n, U))
            Rs[s, inv] = r
        else:
            C = sparse.csr_matrix((np.ones(s.size), (s, inv)), shape=(n, U))
            Rs = sparse.csr_matrix((r, (s, inv)), shape=(n, U))
        n_obs = np.asarray(C.sum(1)).ravel()
        trace += C @ (Phi * Phi @ lam) + n_obs * sigma2[j]
        parts.append((C, Rs, Phi))
    ridge = np.maximum(1e-8, 1e-10 * trace)
    P = np.broadcast_to(np.diag(1.0 / lam), (n, k, k)).copy()
    b = np.zeros((n, k))
    for j, (C, Rs, Phi) in enumerate(parts):
        d = sigma2[j] + ridge
        outer = (Phi[:, :, None] * Phi[:, None, :]).reshape(Phi.shape[0], -1)
        P += np.asarray(C @ outer).reshape(n, k, k) / d[:, None, None]
        b += np.asarray(Rs @ Phi) / d[:, None]
    Omega = np.linalg.inv(P)
    Omega = 0.5 * (Omega + np.transpose(Omega, (0, 2, 1)))
    scores = np.einsum("ikl,il->ik", Omega, b)
    return scores, Omega
