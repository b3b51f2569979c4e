"""Local polynomial smoothers for pooled sparse observations.

All smoothers work on observations aggregated by distinct time value (sums
and counts), which is exactly equivalent to smoothing the pooled points and
keeps grid-valued data cheap.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SmoothingError",
    "epanechnikov",
    "local_linear",
    "local_linear_surface",
    "rotated_diagonal",
]


class SmoothingError(ArithmeticError):
    """Local fit is singular at some evaluation point."""


def epanechnikov(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)


def _advice(h: float) -> str:
    return f"local fit is singular with bandwidth {h:g}; use a larger bandwidth"


def local_linear(
    x: np.ndarray, ysum: np.ndarray, count: np.ndarray, at: np.ndarray, h: float
) -> np.ndarray:
    """Local linear fit at ``at`` from per-location sums and counts.

    The fit equals weighted least squares on the pooled points, where
    location ``x[k]`` carries ``count[k]`` observations summing to ``ysum[k]``.
    """
    D = x[None, :] - at[:, None]
    K = epanechnikov(D / h) * count[None, :]
    s0 = K.sum(1)
    s1 = (K * D).sum(1)
    s2 = (K * D * D).sum(1)
    Kc = epanechnikov(D / h)
    t0 = Kc @ ysum
    t1 = (Kc * D) @ ysum
    det = s0 * s2 - s1 * s1
    if np.any(s0 <= 0) or np.any(det <= 1e-10 * np.maximum(s0 * s2, 1e-300)):
        raise SmoothingError(_advice(h))
    return (s2 * t0 - s1 * t1) / det


def _det3(a, b, c, d, e, f, g, h, i):
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def _solve3(S: np.ndarray, T: np.ndarray, h: float) -> np.ndarray:
    """Intercepts of batched symmetric 3x3 weighted least squares systems."""
    scale = np.sqrt(np.abs(np.einsum("...ii->...i", S)))
    scale = np.where(scale > 0, scale, 1.0)
    Sn = S / scale[..., :, None] / scale[..., None, :]
    Tn = T / scale
    s00, s01, s02 = Sn[..., 0, 0], Sn[..., 0, 1], Sn[..., 0, 2]
    s11, s12, s22 = Sn[..., 1, 1], Sn[..., 1, 2], Sn[..., 2, 2]
    det = _det3(s00, s01, s02, s01, s11, s12, s02, s12, s22)
    if np.any(~np.isfinite(det)) or np.any(det <= 1e-10):
        raise SmoothingError(_advice(h))
    # Cramer's rule for the first unknown
    num = _det3(Tn[..., 0], s01, s02, Tn[..., 1], s11, s12, Tn[..., 2], s12, s22)
    return num / det / scale[..., 0]


def local_linear_surface(
    x: np.ndarray,
    resid: np.ndarray,
    observed: np.ndarray,
    weight: np.ndarray,
    at: np.ndarray,
    h: float,
) -> np.ndarray:
    """Local linear covariance surface on ``at x at`` with the diagonal excluded.

    The raw data are the products ``resid[i, k] * resid[i, l]`` for
    ``k != l`` over subjects ``i`` observed at both distinct times
    ``x[k]`` and ``x[l]``, each weighted by ``weight[i]``. The product kernel
    is separable, so every moment factors through the ``(n, U)`` matrices and
    the ``U x U`` aggregate is never formed.
    """
    D = x[None, :] - at[:, None]
    K0 = epanechnikov(D / h)
    K1 = K0 * D
    K2 = K1 * D
    O = observed.astype(float)
    E = resid * O
    d_cnt = weight @ O
    d_sq = weight @ (E * E)

    def mom(L, R, M, diag):
        # sum_{k != l} L[g, k] Mpair[k, l] R[h, l]
        return ((L @ M.T) * weight) @ (R @ M.T).T - (L * diag) @ R.T

    S = np.empty(at.shape + at.shape + (3, 3))
    S[..., 0, 0] = mom(K0, K0, O, d_cnt)
    S[..., 0, 1] = S[..., 1, 0] = mom(K1, K0, O, d_cnt)
    S[..., 0, 2] = S[..., 2, 0] = mom(K0, K1, O, d_cnt)
    S[..., 1, 1] = mom(K2, K0, O, d_cnt)
    S[..., 1, 2] = S[..., 2, 1] = mom(K1, K1, O, d_cnt)
    S[..., 2, 2] = mom(K0, K2, O, d_cnt)
    T = np.stack(
        [mom(K0, K0, E, d_sq), mom(K1, K0, E, d_sq), mom(K0, K1, E, d_sq)], axis=-1
    )
    C = _solve3(S, T, h)
    return 0.5 * (C + C.T)


def rotated_diagonal(
    u: np.ndarray, v: np.ndarray, cnt: np.ndarray, val: np.ndarray, at: np.ndarray, h: float
) -> np.ndarray:
    """Noise-free covariance diagonal ``C(t, t)`` from off-diagonal products.

    Pairs are given in rotated coordinates ``u = (s + t) / 2`` and
    ``v = (t - s) / 2`` with their total weight ``cnt`` and weighted product
    sum ``val``. The surface is fit locally as ``a + b (u - t0) + c v^2``;
    ``a`` estimates ``C(t0, t0)``.
    """
    near = np.abs(v) < h
    u, v, cnt, val = u[near], v[near], cnt[near], val[near]
    du = u[None, :] - at[:, None]
    w = epanechnikov(du / h) * epanechnikov(v / h)[None, :]
    v2 = v * v
    wc = w * cnt
    S = np.empty((at.size, 3, 3))
    S[:, 0, 0] = wc.sum(1)
    S[:, 0, 1] = S[:, 1, 0] = (wc * du).sum(1)
    S[:, 0, 2] = S[:, 2, 0] = wc @ v2
    S[:, 1, 1] = (wc * du * du).sum(1)
    S[:, 1, 2] = S[:, 2, 1] = (wc * du) @ v2
    S[:, 2, 2] = wc @ (v2 * v2)
    wv = w * val
    T = np.stack([wv.sum(1), (wv * du).sum(1), wv @ v2], axis=-1)
    return _solve3(S, T, h)
