"""Monte Carlo studies: depth choice, outlier detection and interval coverage.

Every replication draws its data from a stream derived from
``(seed, model, replication index)`` only, so the same replication index
sees the same curves and the same uniform draws behind the mask under every
sparseness level (common random numbers). Replications run in parallel with
joblib and are reduced in index order, which makes every summary
independent of the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .boxplot import BoxplotError, functional_boxplot, two_stage_boxplot
from .depth import (
    DepthError,
    depth_ranks,
    directional_outlyingness,
    mbd,
    mfhd,
    revised_depth,
)
from .fdata import Grid, SparseSampleSet
from .fpca import MFPCA, FPCAError, SmoothingError, bmfpca_fit, mfpca_fit_curves
from .simgen import SimConfig, SparsifyConfig, generate, sparsify

__all__ = [
    "StudyConfig",
    "Replication",
    "EvalReport",
    "spearman",
    "detection_rates",
    "run_replications",
    "run_depth_study",
    "run_detection_study",
    "ci_coverage_study",
]

DEPTH_METHODS = ("mfhd_mfpca", "mfhd_bmfpca", "rmfhd_aw", "rmfhd_naw", "rmfhd_dm")
PARTS = ("depth", "detect", "coverage")
BOXPLOTS = ("sparse", "two_stage")
_RETRY_TAG = 0x5EED
_FAILURES = (FPCAError, SmoothingError, DepthError, BoxplotError, np.linalg.LinAlgError)


def spearman(rank_a: Sequence[int], rank_b: Sequence[int]) -> float:
    """Spearman coefficient ``1 - 6 sum d^2 / (n (n^2 - 1))`` of two rankings.

    Parameters
    ----------
    rank_a, rank_b : sequence of int
        Permutations of ``1..n``.
    """
    a = np.asarray(rank_a, dtype=np.int64)
    b = np.asarray(rank_b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rankings must be one-dimensional and of equal length")
    n = a.size
    ref = np.arange(1, n + 1)
    if not (np.array_equal(np.sort(a), ref) and np.array_equal(np.sort(b), ref)):
        raise ValueError("rankings must be permutations of 1..n")
    if n < 2:
        return 1.0
    d2 = float(np.sum((a - b) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def detection_rates(flags: Sequence[bool], truth: Sequence[bool]) -> tuple[float, float]:
    """Correct and false detection rates in percent.

    ``p_c`` is the share of true outliers that are flagged (0 when there are
    none) and ``p_f`` the share of clean curves that are flagged.
    """
    f = np.asarray(flags, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if f.shape != t.shape:
        raise ValueError("flags and truth must have equal length")
    P = int(t.sum())
    N = t.size - P
    pc = 100.0 * np.count_nonzero(f & t) / P if P else 0.0
    pf = 100.0 * np.count_nonzero(f & ~t) / N if N else 0.0
    return pc, pf


@dataclass(frozen=True)
class StudyConfig:
    """Design of a Monte Carlo study.

    Parameters
    ----------
    models : tuple of int
        Data models, 1 to 8.
    kinds : tuple of str
        Sparseness kinds.
    p_curves : tuple of float
        Within-curve missing fractions.
    p_sparse : float
        Fraction of sparse subjects.
    reps : int
        Replications per cell.
    n : int
        Subjects per replication.
    n_grid : int
        Grid points on [0, 1].
    seed : int
    methods : tuple of str
        Candidate depths of the depth study.
    B : int
        Bootstrap resamples.
    alpha : float
        Level of the intervals used by the revised depths and coverage.
    factor : float
        Boxplot fence factor.
    cutoff_q : float
        Directional-outlyingness cutoff level.
    ndirs : int
        Projection directions for halfspace depth and outlyingness.
    contamination : float
    p : int
        Variables per subject (3, or 1 for the univariate reduction).
    normalize_basis : bool
        Passed to :class:`~sparsefbox.simgen.SimConfig`.
    """

    models: tuple = (1,)
    kinds: tuple = ("point",)
    p_curves: tuple = (0.2,)
    p_sparse: float = 1.0
    reps: int = 100
    n: int = 100
    n_grid: int = 50
    seed: int = 0
    methods: tuple = DEPTH_METHODS
    B: int = 100
    alpha: float = 0.05
    factor: float = 1.5
    cutoff_q: float = 0.993
    ndirs: int = 500
    contamination: float = 0.1
    p: int = 3
    normalize_basis: bool = True

    def __post_init__(self):
        for name in ("models", "kinds", "p_curves", "methods"):
            v = getattr(self, name)
            v = (v,) if isinstance(v, (str, int, float)) else tuple(v)
            if not v:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, v)
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        for m in self.models:
            if m not in range(1, 9):
                raise ValueError(f"model {m} outside 1..8")
        allowed = DEPTH_METHODS + ("mbd",)
        for m in self.methods:
            if m not in allowed:
                raise ValueError(f"unknown depth method {m!r}")
        if "mbd" in self.methods and self.p != 1:
            raise ValueError("mbd is available for univariate studies only")
        # validate sparsification settings early
        for k in self.kinds:
            for pc in self.p_curves:
                SparsifyConfig(kind=k, p_sparse=self.p_sparse, p_curve=pc)

    def cells(self) -> list[tuple[int, str, float]]:
        return [(m, k, pc) for m in self.models for k in self.kinds for pc in self.p_curves]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Replication:
    """Outcome of one replication of one study cell.

    ``spearman`` maps depth methods to coefficients; ``rates`` maps boxplot
    variants to ``(p_c, p_f)`` and ``flags`` to the flag vectors;
    ``coverage`` maps ``'mfpca'`` and ``'bmfpca'`` to ``(inside, total,
    mean half-width, integrated squared error)`` over missing cells.
    """

    model: int
    kind: str
    p_curve: float
    index: int
    failed: bool = False
    retried: bool = False
    error: str = ""
    spearman: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    truth: Optional[np.ndarray] = None
    coverage: dict = field(default_factory=dict)


def _streams(seed: int, model: int, index: int, attempt: int) -> np.random.SeedSequence:
    key = [int(seed), int(model), int(index)]
    if attempt:
        key.append(_RETRY_TAG)
    return np.random.SeedSequence(key)


def _replicate_once(c: StudyConfig, model: int, kind: str, p_curve: float, index: int, parts, attempt: int):
    ss = _streams(c.seed, model, index, attempt)
    data_ss, mask_ss, boot_ss = ss.spawn(3)
    grid = Grid.equidistant(c.n_grid)
    sim = SimConfig(
        model_id=model, n=c.n, grid=grid, p=c.p, contamination=c.contamination,
        normalize_basis=c.normalize_basis,
    )
    d = generate(sim, np.random.default_rng(data_ss))
    mask = sparsify(d.curves, SparsifyConfig(kind=kind, p_sparse=c.p_sparse, p_curve=p_curve),
                    np.random.default_rng(mask_ss))
    sample = SparseSampleSet.from_grid(d.curves.values, mask.present, grid)
    boot_seed = int(boot_ss.generate_state(1)[0])
    bfit = bmfpca_fit(sample, grid=grid, B=c.B, alpha=c.alpha, seed=boot_seed)
    need_mfpca = "coverage" in parts or ("depth" in parts and "mfhd_mfpca" in c.methods)
    mfit = mfpca_fit_curves(MFPCA(grid=grid).fit(sample), sample, c.alpha) if need_mfpca else None
    dseed = index
    out = {}

    if "depth" in parts:
        ref = depth_ranks(mfhd(d.signal, ndirs=c.ndirs, seed=dseed).values)
        rho = {}
        for m in c.methods:
            if m == "mfhd_mfpca":
                v = mfhd(mfit.fitted, ndirs=c.ndirs, seed=dseed, grid=grid).values
            elif m == "mfhd_bmfpca":
                v = mfhd(bfit.fitted, ndirs=c.ndirs, seed=dseed, grid=grid).values
            elif m == "mbd":
                v = mbd(bfit.fitted).values
            else:
                v = revised_depth(bfit.fitted, bfit.upper, bfit.lower, m.split("_")[1],
                                  ndirs=c.ndirs, seed=dseed, grid=grid).values
            rho[m] = spearman(depth_ranks(v), ref)
        out["spearman"] = rho

    if "detect" in parts:
        dep = mfhd(bfit.fitted, ndirs=c.ndirs, seed=dseed, grid=grid)
        outl = directional_outlyingness(bfit.fitted, cutoff_q=c.cutoff_q, ndirs=c.ndirs, seed=dseed, grid=grid)
        geoms = {
            "sparse": functional_boxplot(bfit.fitted, dep, c.factor, mask=mask, grid=grid),
            "two_stage": two_stage_boxplot(bfit.fitted, dep, outl, c.factor, mask=mask, grid=grid),
        }
        flags = {k: g.flags(c.n) for k, g in geoms.items()}
        out["flags"] = flags
        out["rates"] = {k: detection_rates(f, d.truth) for k, f in flags.items()}
        out["truth"] = d.truth.copy()

    if "coverage" in parts:
        X = d.signal.values
        miss = ~mask.present
        cov = {}
        for name, f in (("mfpca", mfit), ("bmfpca", bfit)):
            inside = (X >= f.lower) & (X <= f.upper)
            cov[name] = (
                int(inside[miss].sum()),
                int(miss.sum()),
                float(f.half_width[miss].mean()) if miss.any() else 0.0,
                float(np.mean((f.fitted - X) ** 2)),
            )
        out["coverage"] = cov
    return out


def _replicate(c: StudyConfig, model: int, kind: str, p_curve: float, index: int, parts) -> Replication:
    err = ""
    for attempt in (0, 1):
        try:
            out = _replicate_once(c, model, kind, p_curve, index, parts, attempt)
            return Replication(model, kind, p_curve, index, retried=attempt == 1, error=err, **out)
        except _FAILURES as exc:
            err = f"{type(exc).__name__}: {exc}"
    return Replication(model, kind, p_curve, index, failed=True, retried=True, error=err)


def run_replications(
    config: StudyConfig,
    parts: Iterable[str] = PARTS,
    n_jobs: int = 1,
    verbose: int = 0,
) -> list[Replication]:
    """Run every replication of every cell.

    Parameters
    ----------
    config : StudyConfig
    parts : iterable of {'depth', 'detect', 'coverage'}
        Quantities to compute per replication; sharing one run between
        studies avoids refitting.
    n_jobs : int, default=1
        joblib workers. Results do not depend on it.

    Returns
    -------
    list of Replication
        In cell order, then replication index.
    """
    parts = tuple(parts)
    for p in parts:
        if p not in PARTS:
            raise ValueError(f"unknown study part {p!r}")
    tasks = [(m, k, pc, r) for (m, k, pc) in config.cells() for r in range(config.reps)]
    if n_jobs == 1:
        return [_replicate(config, *t, parts) for t in tasks]
    return Parallel(n_jobs=n_jobs, verbose=verbose)(delayed(_replicate)(config, *t, parts) for t in tasks)


@dataclass(frozen=True)
class EvalReport:
    """Aggregated study table.

    Attributes
    ----------
    study : str
        ``'depth'``, ``'detect'`` or ``'coverage'``.
    columns : tuple of str
    rows : tuple of tuple
        One row per (model, kind, p_curve, method) cell.
    excluded : dict
        Failed replications per ``'model/kind/p_curve'`` cell.
    config : dict
    """

    study: str
    columns: tuple
    rows: tuple
    excluded: dict
    config: dict

    def cell(self, **keys) -> dict:
        """The single row matching ``keys`` as a column dict."""
        found = [dict(zip(self.columns, r)) for r in self.rows
                 if all(dict(zip(self.columns, r))[k] == v for k, v in keys.items())]
        if len(found) != 1:
            raise KeyError(f"{len(found)} rows match {keys}")
        return found[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "study": self.study,
            "config": self.config,
            "columns": list(self.columns),
            "rows": [[_json_num(v) for v in r] for r in self.rows],
            "excluded": self.excluded,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _json_num(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def _group(reps: Sequence[Replication], config: StudyConfig):
    by = {cell: [] for cell in config.cells()}
    for r in reps:
        by[(r.model, r.kind, r.p_curve)].append(r)
    excluded = {}
    for cell, rs in by.items():
        excluded[f"{cell[0]}/{cell[1]}/{cell[2]:g}"] = sum(r.failed for r in rs)
        by[cell] = [r for r in rs if not r.failed]
    return by, excluded


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def run_depth_study(
    config: StudyConfig, n_jobs: int = 1, replications: Optional[Sequence[Replication]] = None
) -> EvalReport:
    """Spearman agreement of each candidate depth with the depth of the complete data.

    The reference ranking is the integrated halfspace depth, with constant
    weights, of the true complete curves (the noise-free latent curves
    before sparsification).
    """
    reps = replications if replications is not None else run_replications(config, ("depth",), n_jobs)
    by, excluded = _group(reps, config)
    rows = []
    for (m, k, pc), rs in by.items():
        for meth in config.methods:
            v = np.array([r.spearman[meth] for r in rs])
            if v.size:
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                rows.append((m, k, pc, meth, v.size, float(med), float(q1), float(q3), float(v.mean())))
            else:
                rows.append((m, k, pc, meth, 0) + (float("nan"),) * 4)
    cols = ("model", "kind", "p_curve", "method", "reps", "median", "q1", "q3", "mean")
    return EvalReport("depth", cols, tuple(rows), excluded, config.to_dict())


def run_detection_study(
    config: StudyConfig, n_jobs: int = 1, replications: Optional[Sequence[Replication]] = None
) -> EvalReport:
    """Detection rates of the sparse and sparse two-stage functional boxplots.

    Both variants order the BMFPCA fit by its integrated halfspace depth.
    ``p_c`` is reported as NaN for models without outliers.
    """
    reps = replications if replications is not None else run_replications(config, ("detect",), n_jobs)
    by, excluded = _group(reps, config)
    rows = []
    for (m, k, pc), rs in by.items():
        has_pos = bool(rs) and any(r.truth.any() for r in rs)
        for var in BOXPLOTS:
            rates = np.array([r.rates[var] for r in rs]).reshape(-1, 2)
            if has_pos:
                pcs = rates[:, 0]
                mpc, spc = float(pcs.mean()), _sd(pcs)
            else:
                mpc = spc = float("nan")
            pfs = rates[:, 1]
            mpf = float(pfs.mean()) if pfs.size else float("nan")
            rows.append((m, k, pc, var, len(rs), mpc, spc, mpf, _sd(pfs)))
    cols = ("model", "kind", "p_curve", "method", "reps", "pc_mean", "pc_sd", "pf_mean", "pf_sd")
    return EvalReport("detect", cols, tuple(rows), excluded, config.to_dict())


def ci_coverage_study(
    config: StudyConfig,
    alpha: Optional[float] = None,
    n_jobs: int = 1,
    replications: Optional[Sequence[Replication]] = None,
) -> EvalReport:
    """Pointwise coverage of the true curves at missing cells.

    Coverage is pooled over all (subject, variable, missing cell) triples of
    a study cell. Rows are given for the MFPCA intervals and for the
    bootstrap-corrected intervals.

    Parameters
    ----------
    config : StudyConfig
    alpha : float, optional
        Overrides ``config.alpha``.
    n_jobs : int, default=1
    replications : sequence of Replication, optional
        Precomputed replications with a coverage part at the same level.
    """
    if alpha is not None and alpha != config.alpha:
        config = StudyConfig(**{**config.to_dict(), "alpha": alpha})
    reps = replications if replications is not None else run_replications(config, ("coverage",), n_jobs)
    by, excluded = _group(reps, config)
    rows = []
    for (m, k, pc), rs in by.items():
        for fit in ("mfpca", "bmfpca"):
            a = np.array([r.coverage[fit] for r in rs], dtype=float).reshape(-1, 4)
            tot = a[:, 1].sum()
            cover = float(a[:, 0].sum() / tot) if tot else float("nan")
            rows.append((m, k, pc, fit, len(rs), config.alpha, cover,
                         float(a[:, 2].mean()) if len(rs) else float("nan"),
                         float(a[:, 3].mean()) if len(rs) else float("nan")))
    cols = ("model", "kind", "p_curve", "method", "reps", "alpha", "coverage", "half_width", "mise")
    return EvalReport("coverage", cols, tuple(rows), excluded, config.to_dict())
