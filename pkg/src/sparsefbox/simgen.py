"""Synthetic multivariate functional data with labelled outliers.

Eight contamination models share one Karhunen-Loeve backbone:
``X_i(t) = mu(t) + sum_m rho_im psi_m(t)`` with ``rho_im ~ N(0, nu_m)``,
``nu_m = (M + 1 - m) / M`` and a Fourier basis, observed with Gaussian
noise. :func:`sparsify` then removes grid cells in one of three patterns.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gamma, kv

from .fdata import CompleteCurves, Grid, GridMask

__all__ = [
    "SimConfig",
    "SparsifyConfig",
    "LabeledDataset",
    "fourier_basis",
    "fourier_eigenbasis",
    "matern",
    "mean_functions",
    "generate",
    "sparsify",
    "replication_rng",
]

SPARSE_KINDS = ("point", "peak", "partial")


@dataclass(frozen=True)
class SimConfig:
    """Settings for :func:`generate`.

    Parameters
    ----------
    model_id : int
        Contamination model, 1 (clean) to 8 (covariance outliers).
    n : int
        Number of subjects.
    grid : Grid
        Evaluation grid; 50 equidistant points on [0, 1] by default.
    p : int
        Number of variables: 3, or 1 for the univariate reduction.
    contamination : float
        Outlier fraction in [0, 1).
    seed : int
    M : int
        Number of basis functions in the Karhunen-Loeve sum.
    cross_correlation : float
        Model 8 cross-correlation between error components.
    """

    model_id: int = 1
    n: int = 100
    grid: Grid = field(default_factory=Grid.equidistant)
    p: int = 3
    contamination: float = 0.1
    seed: int = 0
    M: int = 9
    cross_correlation: float = 0.3
    normalize_basis: bool = True

    def __post_init__(self):
        if self.model_id not in range(1, 9):
            raise ValueError(f"model_id must be in 1..8, got {self.model_id}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.p not in (1, 3):
            raise ValueError("p must be 3 (or 1 for the univariate reduction)")
        if not 0.0 <= self.contamination < 1.0:
            raise ValueError("contamination must lie in [0, 1)")
        if self.M < 1:
            raise ValueError("M must be at least 1")

    @property
    def n_outliers(self) -> int:
        return 0 if self.model_id == 1 else int(round(self.contamination * self.n))

    @property
    def eigenvalues(self) -> np.ndarray:
        m = np.arange(1, self.M + 1)
        return (self.M + 1 - m) / self.M

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {"t_min": self.grid.t_min, "t_max": self.grid.t_max, "n_points": len(self.grid)}
        return d


@dataclass(frozen=True)
class SparsifyConfig:
    """Settings for :func:`sparsify`.

    ``kind`` may be one sparseness type applied to every variable, or a
    sequence naming one type per variable.
    """

    kind: str | tuple = "point"
    p_sparse: float = 1.0
    p_curve: float = 0.2
    seed: int = 0

    def __post_init__(self):
        kinds = (self.kind,) if isinstance(self.kind, str) else tuple(self.kind)
        for k in kinds:
            if k not in SPARSE_KINDS:
                raise ValueError(f"unknown sparseness kind {k!r}; expected one of {SPARSE_KINDS}")
        if not isinstance(self.kind, str):
            object.__setattr__(self, "kind", kinds)
        for name in ("p_sparse", "p_curve"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def kind_of(self, j: int) -> str:
        return self.kind if isinstance(self.kind, str) else self.kind[j]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Generated sample: noisy curves, noise-free signal and outlier flags."""

    curves: CompleteCurves
    signal: CompleteCurves
    truth: np.ndarray
    config: SimConfig


def replication_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent stream for replication ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def fourier_basis(M: int, t: np.ndarray, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """First ``M`` orthonormal Fourier functions on ``[lower, upper]``, shape ``(M, len(t))``.

    Ordering: constant, then ``sin``/``cos`` pairs of increasing frequency.
    """
    t = np.asarray(t, dtype=float)
    L = upper - lower
    x = (t - lower) / L
    out = np.empty((M, t.size))
    out[0] = 1.0
    for m in range(1, M):
        k = (m + 1) // 2
        f = np.sin if m % 2 == 1 else np.cos
        out[m] = np.sqrt(2.0) * f(2 * np.pi * k * x)
    return out / np.sqrt(L)


def fourier_eigenbasis(M: int, grid: Grid, p: int) -> np.ndarray:
    """Per-variable eigenfunction blocks, shape ``(p, M, len(grid))``.

    Variable ``j`` (0-based) receives the Fourier functions in cyclically
    shifted order ``j, j+1, ..., M-1, 0, ..., j-1``, so the ``m``-th
    multivariate eigenfunction pairs a different Fourier function with each
    variable. Each block is orthonormal on the grid domain; the multivariate
    functions ``psi_m = block[:, m] / sqrt(p)`` are orthonormal in the summed
    inner product.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    base = fourier_basis(M, grid.points, grid.t_min, grid.t_max)
    return np.stack([base[(np.arange(M) + j) % M] for j in range(p)])


def matern(r: np.ndarray, nu: float) -> np.ndarray:
    """Matern correlation ``2^(1-nu)/Gamma(nu) (sqrt(2 nu) r)^nu K_nu(sqrt(2 nu) r)``."""
    r = np.abs(np.asarray(r, dtype=float))
    x = np.sqrt(2.0 * nu) * r
    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = (2.0 ** (1.0 - nu) / gamma(nu)) * xp**nu * kv(nu, xp)
    return out


def mean_functions(t: np.ndarray) -> np.ndarray:
    """``(5 sin 2 pi t, 5 cos 2 pi t, 5 (t - 1)^2)``, shape ``(3, len(t))``."""
    t = np.asarray(t, dtype=float)
    return np.stack([5 * np.sin(2 * np.pi * t), 5 * np.cos(2 * np.pi * t), 5 * (t - 1) ** 2])


def _matern_cross_cov(t: np.ndarray, sig2: np.ndarray, nus: np.ndarray, rho: float) -> np.ndarray:
    """Joint covariance of a p-variate Matern field on ``t``, shape ``(pG, pG)``."""
    p, G = len(nus), t.size
    r = np.abs(t[:, None] - t[None, :])
    C = np.empty((p * G, p * G))
    for a in range(p):
        for b in range(a, p):
            if a == b:
                blk = sig2[a] * matern(r, nus[a])
            else:
                blk = rho * np.sqrt(sig2[a] * sig2[b]) * matern(r, 0.5 * (nus[a] + nus[b]))
            C[a * G:(a + 1) * G, b * G:(b + 1) * G] = blk
            C[b * G:(b + 1) * G, a * G:(a + 1) * G] = blk.T
    return C


def _psd_factor(C: np.ndarray) -> np.ndarray:
    """Factor ``L`` with ``L L^T = C``; tiny negative eigenvalues are clipped."""
    try:
        return np.linalg.cholesky(C + 1e-8 * np.eye(C.shape[0]))
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (C + C.T))
        if w.min() < -1e-6 * max(1.0, w.max()):
            raise ValueError("Matern cross-covariance is not positive semidefinite")
        return V * np.sqrt(np.clip(w, 0.0, None))


def generate(config: SimConfig, rng: Optional[np.random.Generator] = None) -> LabeledDataset:
    """Simulate one labelled dataset.

    Parameters
    ----------
    config : SimConfig
    rng : numpy.random.Generator, optional
        Overrides the generator seeded from ``config.seed``.
    """
    c = config
    rng = np.random.default_rng(c.seed) if rng is None else rng
    t = c.grid.points
    n, p, G, M = c.n, c.p, len(c.grid), c.M

    basis = fourier_eigenbasis(M, c.grid, p)  # (p, M, G)
    if c.normalize_basis:
        basis = basis / np.sqrt(p)
    nu = c.eigenvalues
    mu = mean_functions(t)
    if p == 1:
        mu = mu[2:3]
    sig2 = rng.uniform(0.5, 0.7, size=p)

    scores = rng.normal(size=(n, M)) * np.sqrt(nu)
    u = np.einsum("im,jmc->ijc", scores, basis)  # (n, p, G)

    truth = np.zeros(n, dtype=bool)
    n_out = c.n_outliers
    truth[rng.permutation(n)[:n_out]] = True
    out_idx = np.flatnonzero(truth)
    clean_idx = np.flatnonzero(~truth)

    means = np.broadcast_to(mu, (n, p, G)).copy()
    model = c.model_id
    sel = slice(None) if p == 3 else slice(2, 3)

    if model == 2:
        W = rng.choice([-1.0, 1.0], size=(n_out, p))
        u[out_idx] += 8 * W[:, :, None]
    elif model == 3:
        W = rng.choice([-1.0, 1.0], size=(n_out, p))
        Ts = rng.uniform(0.0, 0.9, size=n_out)
        for k, i in enumerate(out_idx):
            win = (t >= Ts[k]) & (t <= Ts[k] + 0.1)
            u[i][:, win] += 8 * W[k][:, None]
    elif model == 4:
        shifted = np.stack(
            [mean_functions(t - 0.3)[0], mean_functions(t - 0.2)[1], mean_functions(t - 0.5)[2]]
        )[sel]
        means[out_idx] = shifted
    elif model == 5:
        bump = np.stack(
            [2 * np.sin(4 * np.pi * t), 2 * np.cos(4 * np.pi * t), 2 * np.cos(8 * np.pi * t)]
        )[sel]
        u[out_idx] += bump
        U = rng.uniform(-2.1, 2.1, size=(clean_idx.size, p))
        u[clean_idx] += U[:, :, None]
    elif model == 6:
        R = rng.exponential(scale=0.5, size=(n_out, 3))[:, sel]
        shift = np.array([0.0, 0.0, -6.0])[sel]
        means[out_idx] = (2 + R)[:, :, None] * mu[None] + shift[None, :, None]
    elif model == 7:
        Z = rng.uniform(2.0, 8.0, size=(n, 4))
        s1, c1, s2 = t * np.sin(np.pi * t), t * np.cos(np.pi * t), t * np.sin(2 * np.pi * t)
        for i in range(n):
            if truth[i]:
                add = np.stack([Z[i, 0] * s1, Z[i, 1] * c1, Z[i, 2] * s2 - 6])
            else:
                add = np.stack([Z[i, 3] * s1, (8 - Z[i, 3]) * c1, (Z[i, 3] - 2) * s2 - 6])
            u[i] += add[sel]

    signal = means + u

    if model == 8:
        nus = np.where(
            truth[:, None],
            rng.uniform(0.3, 0.5, size=(n, p)),
            rng.uniform(2.0, 3.0, size=(n, p)),
        )
        eps = np.empty((n, p, G))
        z = rng.normal(size=(n, p * G))
        for i in range(n):
            L = _psd_factor(_matern_cross_cov(t, sig2, nus[i], c.cross_correlation))
            eps[i] = (L @ z[i]).reshape(p, G)
    else:
        eps = rng.normal(size=(n, p, G)) * np.sqrt(sig2)[None, :, None]

    return LabeledDataset(
        curves=CompleteCurves(signal + eps, c.grid),
        signal=CompleteCurves(signal, c.grid),
        truth=truth,
        config=c,
    )


def _window_cells(t: np.ndarray, start: float, width: float) -> np.ndarray:
    lo = start
    hi = start + width
    eps = 1e-12 * max(1.0, abs(hi))
    return (t >= lo - eps) & (t <= hi + eps)


def sparsify(
    curves: CompleteCurves,
    config: SparsifyConfig,
    rng: Optional[np.random.Generator] = None,
) -> GridMask:
    """Draw a missingness mask for ``curves``.

    Each subject is sparse with probability ``p_sparse``. For a sparse
    subject, ``point`` removes every cell independently with probability
    ``p_curve``; ``peak`` removes the window ``[t_start, t_start + p_curve]``
    (as a fraction of the domain) with ``t_start ~ U[0, 1 - p_curve]`` drawn
    per curve; ``partial`` does the same with one ``t_start`` shared by all
    curves of a variable. A subject left without any observation keeps one
    randomly chosen cell.
    """
    c = config
    rng = np.random.default_rng(c.seed) if rng is None else rng
    n, p, G = curves.values.shape
    g = curves.grid
    x = (g.points - g.t_min) / g.length
    present = np.ones((n, p, G), dtype=bool)
    sparse = rng.random(n) < c.p_sparse
    shared_start = rng.uniform(0.0, 1.0 - c.p_curve, size=p)
    for j in range(p):
        kind = c.kind_of(j)
        if kind == "point":
            drop = rng.random((n, G)) < c.p_curve
            present[sparse, j, :] = ~drop[sparse]
        else:
            starts = rng.uniform(0.0, 1.0 - c.p_curve, size=n)
            if c.p_curve <= 0:
                continue
            for i in np.flatnonzero(sparse):
                s0 = starts[i] if kind == "peak" else shared_start[j]
                present[i, j, _window_cells(x, s0, c.p_curve)] = False
    empty = ~present.reshape(n, -1).any(axis=1)
    for i in np.flatnonzero(empty):
        k = rng.integers(p * G)
        present[i, k // G, k % G] = True
    return GridMask(present, g)
