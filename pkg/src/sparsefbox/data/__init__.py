"""Bundled example data.

``cd4_synthetic.csv`` is a synthetic stand-in for the CD4 cell count study
format: 366 subjects, 1 to 11 monthly visits each between 18 months before
and 42 months after seroconversion, one variable ``cd4``. It is produced by
:func:`synthetic_cd4` and carries no real patient values.
"""

from __future__ import annotations

import csv
import io
from importlib import resources

import numpy as np

from ..fdata import SparseSampleSet, ingest_long_csv

__all__ = ["CD4_FILE", "synthetic_cd4", "cd4_csv_text", "load_cd4", "write_cd4"]

CD4_FILE = "cd4_synthetic.csv"


def synthetic_cd4(n: int = 366, seed: int = 20240101) -> list[tuple[str, str, int, int]]:
    """Rows ``(subject_id, 'cd4', month, count)`` of a synthetic CD4 sample.

    Counts follow a declining mean from about 1100 to 600, subject-specific
    level and slope, visit-level noise, and a handful of low-count subjects.
    Visit months are distinct integers in [-18, 42].
    """
    rng = np.random.default_rng(seed)
    months = np.arange(-18, 43)
    rows = []
    n_low = max(1, n // 60)
    low = set(rng.choice(n, size=n_low, replace=False).tolist())
    for i in range(n):
        k = int(rng.integers(1, 12))
        t = np.sort(rng.choice(months, size=k, replace=False))
        level = rng.normal(0.0, 220.0) - (450.0 if i in low else 0.0)
        slope = rng.normal(0.0, 4.0)
        mean = 1100.0 - 500.0 * (t + 18) / 60.0
        y = mean + level + slope * (t - 12) + rng.normal(0.0, 110.0, size=k)
        y = np.maximum(np.rint(y), 10.0)
        sid = f"S{i + 1:03d}"
        rows.extend((sid, "cd4", int(a), int(b)) for a, b in zip(t, y))
    return rows


def cd4_csv_text(rows=None) -> str:
    """Long-format CSV text of :func:`synthetic_cd4` rows."""
    rows = synthetic_cd4() if rows is None else rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "variable", "time", "value"])
    w.writerows(rows)
    return buf.getvalue()


def load_cd4() -> SparseSampleSet:
    """The bundled synthetic CD4 sample on the domain [-18, 42]."""
    text = resources.files(__package__).joinpath(CD4_FILE).read_text(encoding="utf-8")
    return ingest_long_csv(text, domains={"cd4": (-18.0, 42.0)})


def write_cd4(path=None) -> str:
    """Regenerate the bundled file (or write to ``path``); returns the path written."""
    import pathlib

    target = pathlib.Path(path) if path is not None else pathlib.Path(__file__).with_name(CD4_FILE)
    target.write_text(cd4_csv_text(), encoding="utf-8")
    return str(target)
