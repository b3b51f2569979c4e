"""Tukey halfspace depth: exact for one and two dimensions, projected otherwise."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

__all__ = ["halfspace_depth", "pointwise_depth", "unit_directions", "tie_counts"]

DEFAULT_NDIRS = 500


def unit_directions(p: int, ndirs: int = DEFAULT_NDIRS, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-random unit vectors of shape ``(ndirs, p)``.

    The first ``k`` directions do not depend on ``ndirs``, so enlarging the
    set only adds directions.
    """
    if ndirs < 1:
        raise ValueError("ndirs must be at least 1")
    m = int(np.ceil(np.log2(max(ndirs, 2))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = qmc.Sobol(d=p, scramble=True, seed=seed).random_base2(m)[:ndirs]
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    z[norms[:, 0] == 0] = 1.0
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def tie_counts(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row counts ``#{a <= a_k}`` and ``#{a < a_k}`` for every entry, exact under ties."""
    n = a.shape[-1]
    order = np.argsort(a, axis=-1, kind="stable")
    sv = np.take_along_axis(a, order, axis=-1)
    pos = np.broadcast_to(np.arange(n), sv.shape)
    neq = sv[..., 1:] != sv[..., :-1]
    edge = np.ones(sv.shape[:-1] + (1,), dtype=bool)
    end = np.concatenate([neq, edge], axis=-1)
    start = np.concatenate([edge, neq], axis=-1)
    le_sorted = np.minimum.accumulate(np.where(end, pos + 1, n)[..., ::-1], axis=-1)[..., ::-1]
    lt_sorted = np.maximum.accumulate(np.where(start, pos, 0), axis=-1)
    le = np.empty(a.shape, dtype=np.int64)
    lt = np.empty(a.shape, dtype=np.int64)
    np.put_along_axis(le, order, le_sorted, axis=-1)
    np.put_along_axis(lt, order, lt_sorted, axis=-1)
    return le, lt


def _counts_against(ref: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``#{ref <= q}`` and ``#{ref >= q}`` per row, for queries outside the reference."""
    n = ref.shape[-1]
    m = query.shape[-1]
    le_c, lt_c = tie_counts(np.concatenate([ref, query], axis=-1))
    le_q, lt_q = tie_counts(query)
    le = le_c[..., n:] - le_q
    lt = lt_c[..., n:] - lt_q
    return le, n - lt


def _depth_1d(ref: np.ndarray, query: np.ndarray | None) -> np.ndarray:
    """Rows of ``ref`` are samples; returns ``min(#<=, #>=) / n``."""
    n = ref.shape[-1]
    if query is None:
        le, lt = tie_counts(ref)
        ge = n - lt
    else:
        le, ge = _counts_against(ref, query)
    return np.minimum(le, ge) / n


def _depth_2d_single(ref: np.ndarray, x: np.ndarray) -> float:
    """Exact bivariate halfspace depth of ``x`` by sweeping critical angles."""
    n = ref.shape[0]
    d = ref - x
    same = np.all(d == 0, axis=1)
    z = int(same.sum())
    d = d[~same]
    if d.shape[0] == 0:
        return 1.0
    phi = np.sort(np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi))
    crit = np.sort(np.mod(np.concatenate([phi + np.pi / 2, phi - np.pi / 2]), 2 * np.pi))
    mids = 0.5 * (crit + np.roll(crit, -1))
    mids[-1] = 0.5 * (crit[-1] + crit[0] + 2 * np.pi)
    mids = np.mod(mids, 2 * np.pi)
    ext = np.concatenate([phi - 2 * np.pi, phi, phi + 2 * np.pi])
    cnt = np.searchsorted(ext, mids + np.pi / 2, side="right") - np.searchsorted(
        ext, mids - np.pi / 2, side="left"
    )
    return (z + int(cnt.min())) / n


def pointwise_depth(
    ref: np.ndarray,
    query: np.ndarray | None = None,
    ndirs: int = DEFAULT_NDIRS,
    seed: int = 0,
) -> np.ndarray:
    """Halfspace depth at every grid point.

    Parameters
    ----------
    ref : ndarray of shape (G, n, p)
        Reference sample at each of ``G`` grid points.
    query : ndarray of shape (G, m, p), optional
        Points to evaluate; the reference points themselves when omitted.
    ndirs : int
        Number of directions for ``p >= 3``.
    seed : int
        Seed of the direction set.

    Returns
    -------
    ndarray of shape (G, m)
    """
    G, n, p = ref.shape
    if p == 1:
        return _depth_1d(ref[..., 0], None if query is None else query[..., 0])
    if p == 2:
        q = ref if query is None else query
        out = np.empty(q.shape[:2])
        for c in range(G):
            for k in range(q.shape[1]):
                out[c, k] = _depth_2d_single(ref[c], q[c, k])
        return out
    U = unit_directions(p, ndirs, seed)
    out = None
    # chunk over grid points to bound memory
    chunk = max(1, int(4_000_000 // (U.shape[0] * (n + (0 if query is None else query.shape[1])))))
    parts = []
    for c0 in range(0, G, chunk):
        pr = np.einsum("gnp,dp->gdn", ref[c0 : c0 + chunk], U)
        if query is None:
            le, lt = tie_counts(pr)
            ge = n - lt
        else:
            pq = np.einsum("gnp,dp->gdn", query[c0 : c0 + chunk], U)
            le, ge = _counts_against(pr, pq)
        parts.append(np.minimum(le, ge).min(axis=1) / n)
    out = np.concatenate(parts, axis=0)
    return out


def halfspace_depth(
    points: np.ndarray, query: np.ndarray, ndirs: int = DEFAULT_NDIRS, seed: int = 0
) -> float | np.ndarray:
    """Halfspace depth of ``query`` with respect to ``points``.

    Exact for one and two dimensions. For ``p >= 3`` the minimum over
    ``ndirs`` quasi-random directions, which can only overestimate the exact
    depth.

    Parameters
    ----------
    points : array_like of shape (n, p) or (n,)
    query : array_like of shape (p,) or (m, p)
    ndirs : int, default=500
    seed : int, default=0

    Returns
    -------
    float or ndarray of shape (m,)
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("points must be a non-empty (n, p) array")
    p = X.shape[1]
    if p >= 3 and ndirs < 1:
        raise ValueError("ndirs must be at least 1")
    q = np.asarray(query, dtype=float)
    single = q.ndim <= 1 and (q.size == p)
    q = q.reshape(-1, p)
    d = pointwise_depth(X[None], q[None], ndirs=ndirs, seed=seed)[0]
    return float(d[0]) if single else d
