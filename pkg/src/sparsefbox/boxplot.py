"""Geometry of sparse functional boxplots and their intensity companions.

Everything here is pure computation on arrays: envelopes, fences, medians,
outlier tags, sparseness proportions and kernel intensity fields. Drawing is
left to :mod:`sparsefbox.render`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Literal, Optional, Sequence

import contourpy
import numpy as np

from .depth import DepthReport, OutlyingnessReport
from .fdata import CompleteCurves, Grid, GridMask

__all__ = [
    "BoxplotError",
    "BoxplotGeometry",
    "IntensityField",
    "CONTOUR_LEVELS",
    "central_region",
    "functional_boxplot",
    "two_stage_boxplot",
    "sparseness_profile",
    "intensity_field",
]

CONTOUR_LEVELS = (0.25, 0.5, 0.75)
STAGE_TAGS = ("stage1", "stage2")


class BoxplotError(ValueError):
    """Boxplot geometry cannot be built from the given input."""


def _values(curves) -> tuple[np.ndarray, Optional[Grid]]:
    if isinstance(curves, CompleteCurves):
        return curves.values, curves.grid
    X = np.asarray(curves, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    return X, None


def _present(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = mask.present if isinstance(mask, GridMask) else np.asarray(mask, dtype=bool)
    if m.ndim == 2:
        m = m[:, None, :]
    if m.shape != shape:
        raise BoxplotError(f"mask shape {m.shape} does not match curves {shape}")
    return m


def _array_eq(a, b) -> bool:
    if a is None or b is None:
        return a is b
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_array_eq(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b))
    return a == b


@dataclass(frozen=True, eq=False)
class BoxplotGeometry:
    """All arrays needed to draw a (two-stage) sparse functional boxplot.

    Arrays indexed by variable and grid point have shape ``(p, G)``; outlier
    arrays have a leading axis over the ``k`` outliers.

    Attributes
    ----------
    times : ndarray of shape (G,)
    variable_names : tuple of str
    median_index : int
        Subject drawn as the median (deepest of the region's members).
    median : ndarray of shape (p, G)
    median_observed : ndarray of shape (p, G) of bool
        False where the median value comes from the fit.
    lower, upper : ndarray of shape (p, G)
        Envelope of the central region.
    fence_lower, fence_upper : ndarray of shape (p, G)
    members : ndarray of int
        Central-region subjects, deepest first.
    sparseness : ndarray of shape (p, G)
        Proportion of members missing at each grid point.
    boundary : ndarray of shape (p, G)
        Smoothed observed-proportion boundary mapped into the envelope.
    outliers : ndarray of int
        Outlying subjects, stage-one flags first.
    outlier_stage : tuple of str
        ``'stage1'`` or ``'stage2'`` per outlier.
    outlier_curves : ndarray of shape (k, p, G)
    outlier_observed : ndarray of shape (k, p, G) of bool
    factor : float
    reference : float
        Height of the 50% sparseness reference line, as a proportion.
    """

    times: np.ndarray
    variable_names: tuple
    median_index: int
    median: np.ndarray
    median_observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fence_lower: np.ndarray
    fence_upper: np.ndarray
    members: np.ndarray
    sparseness: np.ndarray
    boundary: np.ndarray
    outliers: np.ndarray
    outlier_stage: tuple
    outlier_curves: np.ndarray
    outlier_observed: np.ndarray
    factor: float = 1.5
    reference: float = 0.5
    subject_ids: Optional[tuple] = None

    @property
    def p(self) -> int:
        return self.median.shape[0]

    @property
    def stage1(self) -> np.ndarray:
        return self.outliers[np.array([s == "stage1" for s in self.outlier_stage], dtype=bool)]

    @property
    def stage2(self) -> np.ndarray:
        return self.outliers[np.array([s == "stage2" for s in self.outlier_stage], dtype=bool)]

    def flags(self, n: int) -> np.ndarray:
        """Boolean outlier indicator over ``n`` subjects."""
        out = np.zeros(n, dtype=bool)
        out[self.outliers] = True
        return out

    def cell_tags(self) -> list:
        """Per outlier, per variable, per grid point: ``observed_stage1``, ``observed_stage2`` or ``missing``."""
        tags = []
        for k, stage in enumerate(self.outlier_stage):
            obs = self.outlier_observed[k]
            tags.append(np.where(obs, f"observed_{stage}", "missing").tolist())
        return tags

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxplotGeometry):
            return NotImplemented
        return all(_array_eq(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class IntensityField:
    """Kernel intensity of missing cells inside the central region.

    Attributes
    ----------
    times : ndarray of shape (T,)
        Centres of the time cells.
    values : list of ndarray of shape (V,)
        Centres of the value cells, per variable.
    intensity : list of ndarray of shape (T, V)
        Normalized intensity per variable; zero outside the central region.
    scale : ndarray of shape (p,)
        Divisor applied to the raw intensity of each variable.
    normalization : {'per_variable', 'global', 'none'}
    bandwidths : ndarray of shape (p, 2)
        Time and value bandwidths.
    n_events : ndarray of shape (p,)
    contours : list of list of (level, ndarray of shape (m, 2))
        Contour polylines per variable in (time, value) coordinates.
    """

    times: np.ndarray
    values: list
    intensity: list
    scale: np.ndarray
    normalization: str
    bandwidths: np.ndarray
    n_events: np.ndarray
    contours: list = field(default_factory=list)
    variable_names: tuple = ()

    @property
    def p(self) -> int:
        return len(self.intensity)

    def raw(self, j: int) -> np.ndarray:
        return self.intensity[j] * self.scale[j]

    def mass(self) -> np.ndarray:
        """Integral of the raw intensity over each panel."""
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        out = []
        for j in range(self.p):
            v = self.values[j]
            dv = v[1] - v[0] if v.size > 1 else 1.0
            out.append(float(self.raw(j).sum() * dt * dv))
        return np.array(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntensityField):
            return NotImplemented
        return all(_array_eq(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    __hash__ = None


def central_region(curves, depths: DepthReport, subset: Optional[np.ndarray] = None):
    """The ``ceil(m / 2)`` deepest curves and their pointwise envelope.

    Parameters
    ----------
    curves : CompleteCurves or ndarray of shape (n, p, G)
    depths : DepthReport
    subset : ndarray of int, optional
        Restrict the ranking to these subjects.

    Returns
    -------
    members : ndarray of int
        Deepest first.
    lower, upper : ndarray of shape (p, G)
    """
    X, _ = _values(curves)
    n = X.shape[0]
    if depths.n != n:
        raise BoxplotError("depth report and curves disagree on the number of subjects")
    pool = np.arange(n) if subset is None else np.asarray(subset, dtype=np.int64)
    if pool.size < 2:
        raise BoxplotError("a central region needs at least 2 curves")
    pool = pool[np.argsort(depths.ranks[pool], kind="stable")]
    members = pool[: math.ceil(pool.size / 2)]
    return members, X[members].min(axis=0), X[members].max(axis=0)


def _nw_smooth(y: np.ndarray, x: np.ndarray, bw: float) -> np.ndarray:
    K = np.exp(-0.5 * ((x[:, None] - x[None, :]) / bw) ** 2)
    return (K @ y.T / K.sum(1)[:, None]).T


def sparseness_profile(
    mask,
    members: Sequence[int],
    lower: np.ndarray,
    upper: np.ndarray,
    times: np.ndarray,
    smoothing_bw: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Missing proportion among central-region members and its display boundary.

    Returns ``s`` of shape ``(p, G)`` and the boundary
    ``lower + smooth(1 - s) * (upper - lower)``, where ``smooth`` is a
    Gaussian kernel smoother with bandwidth ``smoothing_bw`` (default three
    mean grid spacings).
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise BoxplotError("sparseness profile needs a nonempty member set")
    pres = mask[members]
    s = 1.0 - pres.mean(axis=0)
    bw = 3.0 * float(np.mean(np.diff(times))) if smoothing_bw is None else float(smoothing_bw)
    observed = np.clip(_nw_smooth(1.0 - s, times, bw), 0.0, 1.0)
    boundary = lower + observed * (upper - lower)
    return s, boundary


def _geometry(X, present, times, names, ids, depths, factor, stage1, smoothing_bw):
    n = X.shape[0]
    remainder = np.setdiff1d(np.arange(n), stage1)
    members, lower, upper = central_region(X, depths, remainder)
    width = upper - lower
    f_lo, f_hi = lower - factor * width, upper + factor * width
    R = X[remainder]
    out2 = remainder[np.any((R < f_lo) | (R > f_hi), axis=(1, 2))]
    outliers = np.concatenate([np.asarray(stage1, dtype=np.int64), out2])
    stages = ("stage1",) * len(stage1) + ("stage2",) * out2.size
    s, boundary = sparseness_profile(present, members, lower, upper, times, smoothing_bw)
    med = int(members[0])
    return BoxplotGeometry(
        times=np.asarray(times, dtype=float).copy(),
        variable_names=tuple(names),
        median_index=med,
        median=X[med].copy(),
        median_observed=present[med].copy(),
        lower=lower,
        upper=upper,
        fence_lower=f_lo,
        fence_upper=f_hi,
        members=members,
        sparseness=s,
        boundary=boundary,
        outliers=outliers,
        outlier_stage=stages,
        outlier_curves=X[outliers].copy(),
        outlier_observed=present[outliers].copy(),
        factor=float(factor),
        subject_ids=None if ids is None else tuple(ids),
    )


def _prepare(curves, mask, grid, variable_names):
    X, g = _values(curves)
    g = g if g is not None else grid
    times = g.points if g is not None else np.linspace(0.0, 1.0, X.shape[2])
    names = variable_names if variable_names is not None else [f"X{j + 1}" for j in range(X.shape[1])]
    return X, _present(mask, X.shape), times, names


def functional_boxplot(
    curves,
    depths: DepthReport,
    factor: float = 1.5,
    mask=None,
    grid: Optional[Grid] = None,
    variable_names: Optional[Sequence[str]] = None,
    subject_ids: Optional[Sequence[str]] = None,
    smoothing_bw: Optional[float] = None,
) -> BoxplotGeometry:
    """Sparse functional boxplot.

    The central region holds the deepest half of the curves; fences inflate
    its envelope by ``factor`` times its width, and a curve leaving the
    fences at any grid point of any variable is an outlier. Without a mask
    (or with a full one) this is the ordinary functional boxplot.

    Parameters
    ----------
    curves : CompleteCurves or ndarray of shape (n, p, G)
        Fitted curves on a common grid.
    depths : DepthReport
    factor : float, default=1.5
    mask : GridMask or bool ndarray of shape (n, p, G), optional
        Observed cells; all cells count as observed when omitted.
    grid : Grid, optional
    variable_names, subject_ids : sequence of str, optional
    smoothing_bw : float, optional
        Bandwidth of the sparseness boundary smoother.
    """
    if factor <= 0:
        raise BoxplotError("factor must be positive")
    X, present, times, names = _prepare(curves, mask, grid, variable_names)
    return _geometry(X, present, times, names, subject_ids, depths, factor, np.zeros(0, np.int64), smoothing_bw)


def two_stage_boxplot(
    curves,
    depths: DepthReport,
    outl: OutlyingnessReport,
    factor: float = 1.5,
    mask=None,
    grid: Optional[Grid] = None,
    variable_names: Optional[Sequence[str]] = None,
    subject_ids: Optional[Sequence[str]] = None,
    smoothing_bw: Optional[float] = None,
) -> BoxplotGeometry:
    """Sparse two-stage functional boxplot.

    Curves flagged by directional outlyingness are set aside first. The
    central region, fences and fence outliers are then computed on the
    remaining curves, ranked by their original depths.
    """
    if factor <= 0:
        raise BoxplotError("factor must be positive")
    X, present, times, names = _prepare(curves, mask, grid, variable_names)
    n = X.shape[0]
    if outl.n != n:
        raise BoxplotError("outlyingness report and curves disagree on the number of subjects")
    stage1 = np.flatnonzero(outl.flagged)
    if stage1.size >= n - 1:
        raise BoxplotError(
            f"directional outlyingness flags {stage1.size} of {n} curves; too few remain for a boxplot"
        )
    return _geometry(X, present, times, names, subject_ids, depths, factor, stage1, smoothing_bw)


def _silverman(x: np.ndarray, fallback: float) -> float:
    if x.size < 2:
        return fallback
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    h = 0.9 * spread * x.size ** (-0.2)
    return float(h) if h > 0 else fallback


def intensity_field(
    mask,
    fitted,
    members: Sequence[int],
    lower: np.ndarray,
    upper: np.ndarray,
    grid: Optional[Grid] = None,
    bandwidths: Optional[Sequence[float]] = None,
    norm: Literal["per_variable", "global", "none"] = "per_variable",
    contours: bool = False,
    resolution: int = 100,
    variable_names: Optional[Sequence[str]] = None,
) -> IntensityField:
    """Kernel intensity of the missing cells of central-region members.

    Events are the pairs ``(t_c, fitted value)`` of every missing cell of
    every member. The intensity is a sum of product Gaussian kernels (not
    divided by the event count, so it grows with the number of events),
    evaluated on a ``resolution x resolution`` rectangle spanning the
    envelope and set to zero outside it.

    Parameters
    ----------
    mask : GridMask or bool ndarray of shape (n, p, G)
    fitted : CompleteCurves or ndarray of shape (n, p, G)
    members : sequence of int
    lower, upper : ndarray of shape (p, G)
        Envelope of the central region.
    grid : Grid, optional
    bandwidths : (float, float), optional
        Time and value bandwidths; Silverman's rule per axis by default.
    norm : {'per_variable', 'global', 'none'}
    contours : bool
        Add contour polylines at levels 0.25, 0.5 and 0.75 of the normalized field.
    resolution : int, default=100
    """
    if norm not in ("per_variable", "global", "none"):
        raise BoxplotError(f"unknown normalization {norm!r}")
    X, g = _values(fitted)
    g = g if g is not None else grid
    times = g.points if g is not None else np.linspace(0.0, 1.0, X.shape[2])
    present = _present(mask, X.shape)
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise BoxplotError("intensity field needs a nonempty central region")
    p = X.shape[1]
    t_lo, t_hi = float(times[0]), float(times[-1])
    tc = t_lo + (np.arange(resolution) + 0.5) * (t_hi - t_lo) / resolution
    vals, raws, bws, counts = [], [], [], []
    for j in range(p):
        v_lo, v_hi = float(lower[j].min()), float(upper[j].max())
        span = v_hi - v_lo if v_hi > v_lo else 1.0
        vc = v_lo + (np.arange(resolution) + 0.5) * (v_hi - v_lo) / resolution
        i_idx, c_idx = np.nonzero(~present[members, j, :])
        et = times[c_idx]
        ev = X[members[i_idx], j, c_idx]
        if bandwidths is None:
            ht = _silverman(et, 0.05 * (t_hi - t_lo))
            hv = _silverman(ev, 0.05 * span)
        else:
            ht, hv = (float(b) for b in bandwidths)
        Kt = np.exp(-0.5 * ((tc[:, None] - et[None, :]) / ht) ** 2)
        Kv = np.exp(-0.5 * ((vc[:, None] - ev[None, :]) / hv) ** 2)
        raw = (Kt @ Kv.T) / (2 * np.pi * ht * hv)
        lo_t = np.interp(tc, times, lower[j])
        hi_t = np.interp(tc, times, upper[j])
        inside = (vc[None, :] >= lo_t[:, None]) & (vc[None, :] <= hi_t[:, None])
        raw = np.where(inside, raw, 0.0)
        vals.append(vc)
        raws.append(raw)
        bws.append((ht, hv))
        counts.append(et.size)
    maxima = np.array([r.max() if r.size else 0.0 for r in raws])
    if norm == "per_variable":
        scale = np.where(maxima > 0, maxima, 1.0)
    elif norm == "global":
        scale = np.full(p, maxima.max() if maxima.max() > 0 else 1.0)
    else:
        scale = np.ones(p)
    fields_ = [r / s for r, s in zip(raws, scale)]
    lines = []
    if contours:
        for j in range(p):
            per = []
            if fields_[j].max() > 0:
                gen = contourpy.contour_generator(vals[j], tc, fields_[j])
                for level in CONTOUR_LEVELS:
                    for seg in gen.lines(level):
                        # contourpy returns (x=value, y=time); store (time, value)
                        per.append((level, np.asarray(seg)[:, ::-1].copy()))
            lines.append(per)
    names = variable_names if variable_names is not None else [f"X{j + 1}" for j in range(p)]
    return IntensityField(
        times=tc,
        values=vals,
        intensity=fields_,
        scale=scale,
        normalization=norm,
        bandwidths=np.array(bws, dtype=float),
        n_events=np.array(counts, dtype=np.int64),
        contours=lines,
        variable_names=tuple(names),
    )
