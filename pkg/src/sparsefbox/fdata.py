"""Data model for sparse multivariate functional samples.

A sample holds, for every subject and variable, an irregular list of
``(time, value)`` observations. Curves evaluated on a common :class:`Grid`
are held in :class:`CompleteCurves`, and :class:`GridMask` records which grid
cells carry an actual observation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, TextIO

import numpy as np

__all__ = [
    "FDataError",
    "Grid",
    "SparseSampleSet",
    "GridMask",
    "CompleteCurves",
    "DEFAULT_SCHEMA",
    "ingest_long_csv",
    "export_long_csv",
    "snap_to_grid",
    "sparseness_summary",
]

DEFAULT_SCHEMA = {
    "subject_id": "subject_id",
    "variable": "variable",
    "time": "time",
    "value": "value",
}


class FDataError(ValueError):
    """Invalid functional data input."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing evaluation points on ``[t_min, t_max]``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise FDataError("a grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise FDataError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise FDataError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def equidistant(cls, n_points: int = 50, lower: float = 0.0, upper: float = 1.0) -> "Grid":
        return cls(np.linspace(lower, upper, n_points))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    @property
    def t_min(self) -> float:
        return float(self.points[0])

    @property
    def t_max(self) -> float:
        return float(self.points[-1])

    @property
    def length(self) -> float:
        return self.t_max - self.t_min

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.points)))

    @property
    def snap_tolerance(self) -> float:
        return 0.5 * self.min_spacing

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights ``W`` with ``sum(W * f) ~ integral of f``."""
        d = np.diff(self.points)
        w = np.zeros(self.points.size)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w

    def cell_widths(self) -> np.ndarray:
        """``(t_{c+1} - t_{c-1}) / 2`` with ``t_0 = t_1`` and ``t_{N+1} = t_N``."""
        return self.trapezoid_weights()


class SparseSampleSet:
    """Irregularly observed multivariate functional sample.

    Observations of variable ``j`` are kept as three flat arrays (subject
    index, time, value) sorted by subject and then by time; use :meth:`obs`
    for the per-subject view.

    Parameters
    ----------
    subject_ids : sequence of str
        Labels of the ``n`` subjects, in index order.
    variable_names : sequence of str
        Labels of the ``p`` variables.
    records : sequence of (subject, time, value) array triples
        One triple per variable. Subject entries are integer indices.
    domains : sequence of (float, float), optional
        Closed interval of each variable. Defaults to the observed range.
    rows_consumed : int, optional
        Number of input rows the set was built from (ingestion report).
    """

    def __init__(
        self,
        subject_ids: Sequence[str],
        variable_names: Sequence[str],
        records: Sequence[tuple],
        domains: Optional[Sequence[tuple]] = None,
        rows_consumed: Optional[int] = None,
    ):
        self.subject_ids = tuple(str(s) for s in subject_ids)
        self.variable_names = tuple(str(v) for v in variable_names)
        n, p = len(self.subject_ids), len(self.variable_names)
        if n < 1 or p < 1:
            raise FDataError("a sample needs at least one subject and one variable")
        if len(set(self.subject_ids)) != n:
            raise FDataError("subject ids must be unique")
        if len(set(self.variable_names)) != p:
            raise FDataError("variable names must be unique")
        if len(records) != p:
            raise FDataError(f"expected {p} record triples, got {len(records)}")

        subj_cols, time_cols, val_cols = [], [], []
        seen = np.zeros(n, dtype=bool)
        for j, (s, t, y) in enumerate(records):
            s = np.asarray(s, dtype=np.int64).ravel()
            t = np.asarray(t, dtype=float).ravel()
            y = np.asarray(y, dtype=float).ravel()
            if not (s.size == t.size == y.size):
                raise FDataError(f"variable {self.variable_names[j]!r}: ragged record arrays")
            if s.size and (s.min() < 0 or s.max() >= n):
                raise FDataError(f"variable {self.variable_names[j]!r}: subject index out of range")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
                raise FDataError(f"variable {self.variable_names[j]!r}: non-finite time or value")
            order = np.lexsort((t, s))
            s, t, y = s[order], t[order], y[order]
            dup = (np.diff(s) == 0) & (np.diff(t) == 0)
            if np.any(dup):
                k = int(np.flatnonzero(dup)[0])
                raise FDataError(
                    f"duplicate observation (subject={self.subject_ids[s[k]]!r}, "
                    f"variable={self.variable_names[j]!r}, time={t[k]!r})"
                )
            seen[s] = True
            subj_cols.append(_frozen(s))
            time_cols.append(_frozen(t))
            val_cols.append(_frozen(y))
        if not np.all(seen):
            bad = [self.subject_ids[i] for i in np.flatnonzero(~seen)]
            raise FDataError(f"subjects without any observation: {bad[:10]}")
        self._subject = tuple(subj_cols)
        self._time = tuple(time_cols)
        self._value = tuple(val_cols)

        if domains is None:
            domains = []
            for j in range(p):
                t = self._time[j]
                domains.append((float(t.min()), float(t.max())) if t.size else (0.0, 1.0))
        if len(domains) != p:
            raise FDataError("one domain per variable is required")
        doms = []
        for j, (lo, hi) in enumerate(domains):
            lo, hi = float(lo), float(hi)
            if not lo <= hi:
                raise FDataError(f"variable {self.variable_names[j]!r}: empty domain")
            t = self._time[j]
            if t.size and (t.min() < lo or t.max() > hi):
                raise FDataError(f"variable {self.variable_names[j]!r}: times outside domain")
            doms.append((lo, hi))
        self.domains = tuple(doms)
        self.rows_consumed = rows_consumed

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def p(self) -> int:
        return len(self.variable_names)

    def variable(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat ``(subject, time, value)`` arrays of variable ``j``."""
        return self._subject[j], self._time[j], self._value[j]

    def obs(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        s = self._subject[j]
        lo, hi = np.searchsorted(s, [i, i + 1])
        return self._time[j][lo:hi], self._value[j][lo:hi]

    def counts(self) -> np.ndarray:
        """``(n, p)`` observation counts."""
        return np.stack([np.bincount(s, minlength=self.n) for s in self._subject], axis=1)

    @property
    def n_observations(self) -> int:
        return int(sum(s.size for s in self._subject))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseSampleSet):
            return NotImplemented
        if (
            self.subject_ids != other.subject_ids
            or self.variable_names != other.variable_names
            or self.domains != other.domains
        ):
            return False
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                self._subject + self._time + self._value,
                other._subject + other._time + other._value,
            )
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"SparseSampleSet(n={self.n}, p={self.p}, "
            f"observations={self.n_observations}, variables={list(self.variable_names)})"
        )

    @classmethod
    def from_grid(
        cls,
        values: np.ndarray,
        mask: np.ndarray,
        grid: Grid,
        subject_ids: Optional[Sequence[str]] = None,
        variable_names: Optional[Sequence[str]] = None,
    ) -> "SparseSampleSet":
        """Build a sample from curves on ``grid`` keeping cells where ``mask`` is true."""
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if values.ndim != 3 or values.shape != mask.shape or values.shape[2] != len(grid):
            raise FDataError("values and mask must both have shape (n, p, len(grid))")
        n, p, _ = values.shape
        if subject_ids is None:
            subject_ids = [str(i) for i in range(n)]
        if variable_names is None:
            variable_names = [f"X{j + 1}" for j in range(p)]
        records = []
        for j in range(p):
            s, c = np.nonzero(mask[:, j, :])
            records.append((s, grid.points[c], values[s, j, c]))
        return cls(subject_ids, variable_names, records, domains=[(grid.t_min, grid.t_max)] * p)

    def to_rows(self) -> list[tuple[str, str, float, float]]:
        """Long-format rows ordered by subject, variable and time."""
        rows = []
        for i in range(self.n):
            for j in range(self.p):
                t, y = self.obs(i, j)
                rows.extend(
                    (self.subject_ids[i], self.variable_names[j], float(a), float(b))
                    for a, b in zip(t, y)
                )
        return rows

    def take(self, indices: Sequence[int]) -> "SparseSampleSet":
        """Subset of subjects, in the given order (indices must be distinct)."""
        idx = np.asarray(indices, dtype=np.int64)
        if np.unique(idx).size != idx.size:
            raise FDataError("take() needs distinct subject indices")
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[idx] = np.arange(idx.size)
        records = []
        for j in range(self.p):
            s, t, y = self.variable(j)
            keep = remap[s] >= 0
            records.append((remap[s[keep]], t[keep], y[keep]))
        return SparseSampleSet(
            [self.subject_ids[i] for i in idx], self.variable_names, records, domains=self.domains
        )


@dataclass(frozen=True, eq=False)
class GridMask:
    """``present[i, j, c]`` is true iff subject ``i``, variable ``j`` is observed at cell ``c``."""

    present: np.ndarray
    grid: Grid
    collapsed: int = 0

    def __post_init__(self):
        m = np.asarray(self.present, dtype=bool)
        if m.ndim != 3 or m.shape[2] != len(self.grid):
            raise FDataError("mask must have shape (n, p, len(grid))")
        object.__setattr__(self, "present", _frozen(m))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.present.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridMask)
            and self.grid == other.grid
            and np.array_equal(self.present, other.present)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CompleteCurves:
    """Curve values ``values[i, j, c]`` on a common grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, None, :]
        if v.ndim != 3 or v.shape[2] != len(self.grid):
            raise FDataError("curve values must have shape (n, p, len(grid))")
        if not np.all(np.isfinite(v)):
            raise FDataError("curve values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CompleteCurves)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _parse_float(text: str, what: str, lineno: int) -> float:
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise FDataError(f"line {lineno}: cannot parse {what} {text!r} as a number") from None
    if not math.isfinite(x):
        raise FDataError(f"line {lineno}: non-finite {what} {text!r}")
    return x


def ingest_long_csv(
    stream: TextIO | str,
    schema: Optional[Mapping[str, str]] = None,
    domains: Optional[Mapping[str, tuple]] = None,
) -> SparseSampleSet:
    """Read a long-format CSV (one observation per row) into a sample.

    Parameters
    ----------
    stream : file-like or str
        Text with a header row. A ``str`` is treated as the CSV content.
    schema : mapping, optional
        Maps the canonical fields ``subject_id``, ``variable``, ``time`` and
        ``value`` to column names. Missing keys fall back to the canonical name.
        A schema without a ``variable`` column may map it to ``None``; all rows
        then belong to a single variable named ``value``.
    domains : mapping, optional
        Variable name to closed interval; defaults to the observed range.

    Returns
    -------
    SparseSampleSet
        Subjects are indexed in first-appearance order and variables in
        sorted name order, so export followed by ingest is the identity; the
        number of data rows read is in ``rows_consumed``.

    Raises
    ------
    FDataError
        On a missing column, malformed or non-finite field (the message names
        the line), or a duplicated (subject, variable, time) triple.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FDataError("empty CSV input") from None
    header = [h.strip() for h in header]
    pos = {}
    for key, name in cols.items():
        if name is None and key == "variable":
            pos[key] = None
            continue
        if name not in header:
            raise FDataError(f"column {name!r} (for {key}) not found in header {header}")
        pos[key] = header.index(name)

    subj_index: dict[str, int] = {}
    var_index: dict[str, int] = {}
    buckets: list[tuple[list, list, list]] = []
    seen: set = set()
    rows = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise FDataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        sid = row[pos["subject_id"]].strip()
        if not sid:
            raise FDataError(f"line {lineno}: empty subject id")
        var = "value" if pos["variable"] is None else row[pos["variable"]].strip()
        if not var:
            raise FDataError(f"line {lineno}: empty variable name")
        t = _parse_float(row[pos["time"]], "time", lineno)
        y = _parse_float(row[pos["value"]], "value", lineno)
        key = (sid, var, t)
        if key in seen:
            raise FDataError(
                f"line {lineno}: duplicate observation (subject={sid!r}, variable={var!r}, time={t!r})"
            )
        seen.add(key)
        i = subj_index.setdefault(sid, len(subj_index))
        if var not in var_index:
            var_index[var] = len(var_index)
            buckets.append(([], [], []))
        b = buckets[var_index[var]]
        b[0].append(i)
        b[1].append(t)
        b[2].append(y)
        rows += 1
    if rows == 0:
        raise FDataError("CSV contains no observations")
    names = sorted(var_index)
    buckets = [buckets[var_index[v]] for v in names]
    doms = None
    if domains:
        doms = []
        for j, name in enumerate(names):
            if name in domains:
                doms.append(tuple(domains[name]))
            else:
                t = buckets[j][1]
                doms.append((min(t), max(t)))
    return SparseSampleSet(list(subj_index), names, buckets, domains=doms, rows_consumed=rows)


def export_long_csv(sample: SparseSampleSet, stream: Optional[TextIO] = None) -> str:
    """Write ``sample`` as long CSV; returns the text (also written to ``stream``)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "variable", "time", "value"])
    for sid, var, t, y in sample.to_rows():
        w.writerow([sid, var, repr(t), repr(y)])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def snap_to_grid(sample: SparseSampleSet, grid: Grid, tol: Optional[float] = None) -> GridMask:
    """Map every observation to its nearest grid point.

    ``collapsed`` on the result counts observations that landed on a cell
    already claimed by another observation of the same subject and variable.
    """
    tol = grid.snap_tolerance if tol is None else float(tol)
    pts = grid.points
    present = np.zeros((sample.n, sample.p, pts.size), dtype=bool)
    collapsed = 0
    offending = []
    for j in range(sample.p):
        s, t, _ = sample.variable(j)
        if t.size == 0:
            continue
        k = np.clip(np.searchsorted(pts, t), 1, pts.size - 1)
        left_closer = (t - pts[k - 1]) <= (pts[k] - t)
        c = np.where(left_closer, k - 1, k)
        dist = np.abs(pts[c] - t)
        bad = dist > tol * (1 + 1e-12)
        if np.any(bad):
            for b in np.flatnonzero(bad)[:20]:
                offending.append((sample.subject_ids[s[b]], sample.variable_names[j], float(t[b])))
            continue
        flat = s * pts.size + c
        uniq = np.unique(flat)
        collapsed += flat.size - uniq.size
        present[uniq // pts.size, j, uniq % pts.size] = True
    if offending:
        raise FDataError(f"observations farther than {tol:g} from every grid point: {offending}")
    return GridMask(present, grid, collapsed)


def sparseness_summary(mask: GridMask) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``(p_sparse, p_curve)`` per variable.

    ``p_sparse[j]`` is the fraction of subjects missing at least one cell of
    variable ``j``; ``p_curve[j]`` is the mean missing fraction among those
    subjects (0 when there are none).
    """
    missing = ~mask.present
    frac = missing.mean(axis=2)  # (n, p)
    sparse = missing.any(axis=2)
    p_sparse = sparse.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_curve = np.where(
            sparse.sum(axis=0) > 0,
            (frac * sparse).sum(axis=0) / np.maximum(sparse.sum(axis=0), 1),
            0.0,
        )
    return p_sparse, p_curve

