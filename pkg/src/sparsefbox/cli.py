"""Command-line interface: ``sparsefbox <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are
option names with dashes or underscores); flags given on the command line
override the file. The resolved configuration is logged to stderr as JSON.

Exit codes: 0 success, 2 usage error, 3 input/output failure, 4 numerical
failure.

File formats
------------
long CSV
    ``subject_id,variable,time,value``, one observation per row.
mask CSV
    ``subject_id,variable,time,present`` for every grid cell.
truth CSV
    ``subject_id,outlier`` with 0/1 flags.
fit matrices
    ``fitted.csv``, ``lower.csv``, ``upper.csv``: one row per
    (subject, variable) with columns ``subject_id,variable`` followed by
    one column per grid time.
depth CSV
    ``subject_id,method,depth,rank``.
outlyingness CSV
    ``subject_id,mo_1..mo_p,vo,flagged``.
geometry JSON
    Schema documented in :mod:`sparsefbox.render`.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import pathlib
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .boxplot import BoxplotError, functional_boxplot, intensity_field, two_stage_boxplot
from .depth import DepthError, DepthReport, directional_outlyingness, mbd, mfhd, revised_depth
from .eval import StudyConfig, ci_coverage_study, run_depth_study, run_detection_study, run_replications
from .fdata import FDataError, Grid, SparseSampleSet, export_long_csv, ingest_long_csv, snap_to_grid
from .fpca import MFPCA, FPCAError, SmoothingError, bmfpca_fit, mfpca_fit_curves
from .render import StyleConfig, emit_json, emit_svg, parse_json
from .simgen import SimConfig, SparsifyConfig, generate, replication_rng, sparsify

__all__ = ["main", "run", "build_parser"]

log = logging.getLogger("sparsefbox")

THREADS_ENV = "SPARSEFBOX_THREADS"
EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4

# defaults of options that may also come from a config file
DEFAULTS = {
    "seed": 0,
    "threads": None,
    "model": 1,
    "n": 100,
    "p": 3,
    "contamination": 0.1,
    "grid_points": None,
    "domain": None,
    "kind": "point",
    "p_sparse": 1.0,
    "p_curve": 0.0,
    "method": "bmfpca",
    "B": 100,
    "alpha": 0.05,
    "pve": 0.99,
    "bandwidth": None,
    "depth": "auto",
    "methods": "auto",
    "ndirs": 500,
    "cutoff_q": 0.993,
    "factor": 1.5,
    "two_stage": False,
    "intensity": False,
    "norm": "per_variable",
    "contours": False,
    "models": "2",
    "kinds": "point",
    "pcurve": "0.2",
    "reps": 100,
    "plausible": None,
    "schema": None,
}


class UsageError(Exception):
    """Invalid option values detected after parsing."""


def _csv_list(text, cast=str) -> list:
    if isinstance(text, (list, tuple)):
        return [cast(v) for v in text]
    return [cast(v.strip()) for v in str(text).split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument(
        "--threads", type=int,
        help=f"worker processes (default ${THREADS_ENV} or the CPU count); results do not depend on it",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-points", type=int, help="evaluation grid size (default 50 on the data domain)")
    p.add_argument("--domain", help="grid domain as LOW,HIGH (default: observed time range)")


def _add_fit(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["bmfpca", "mfpca"], help="curve fit (default bmfpca)")
    p.add_argument("--B", type=int, help="bootstrap resamples (default 100)")
    p.add_argument("--alpha", type=float, help="interval level 1 - alpha (default 0.05)")
    p.add_argument("--pve", type=float, help="proportion of variance explained (default 0.99)")
    p.add_argument("--bandwidth", type=float, help="smoothing bandwidth (default 0.1 x domain length)")


def _add_schema(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--schema",
        help="column names as key=name pairs, e.g. subject_id=id,time=month (keys: subject_id, variable, time, value)",
    )


def _add_boxplot(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", help="ordering depth: auto (mbd for one variable, else mfhd), mfhd, mbd, "
                                   "rmfhd_aw, rmfhd_naw, rmfhd_dm")
    p.add_argument("--ndirs", type=int, help="projection directions (default 500)")
    p.add_argument("--factor", type=float, help="fence factor (default 1.5)")
    p.add_argument("--two-stage", action="store_true", default=None,
                   help="screen by directional outlyingness before the fence rule")
    p.add_argument("--cutoff-q", type=float, help="outlyingness cutoff level (default 0.993)")
    p.add_argument("--intensity", action="store_true", default=None, help="add the intensity field")
    p.add_argument("--norm", choices=["per_variable", "global", "none"], help="intensity normalization")
    p.add_argument("--contours", action="store_true", default=None, help="intensity contours at 0.25/0.5/0.75")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsefbox",
        description="Sparse functional boxplots: fitting, depth, outlier detection, rendering and studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", help="generate a labelled synthetic sample",
                       description="Write data.csv (long), mask.csv, truth.csv and config.json to --out.")
    _add_common(p)
    p.add_argument("--model", type=int, choices=range(1, 9), metavar="{1..8}", help="data model (default 1)")
    p.add_argument("--n", type=int, help="subjects (default 100)")
    p.add_argument("--p", type=int, choices=[1, 3], help="variables (default 3)")
    p.add_argument("--contamination", type=float, help="outlier fraction (default 0.1)")
    p.add_argument("--grid-points", type=int, help="grid size on [0, 1] (default 50)")
    p.add_argument("--kind", help="sparseness kind point|peak|partial, or one per variable comma separated")
    p.add_argument("--p-sparse", type=float, help="fraction of sparse subjects (default 1)")
    p.add_argument("--p-curve", type=float, help="missing fraction per sparse curve (default 0: complete)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sparsify", help="remove cells from a complete long CSV",
                       description="Write the sparsified long CSV and its mask CSV to --out.")
    _add_common(p)
    _add_grid(p)
    _add_schema(p)
    p.add_argument("--in", dest="input", required=True, help="long CSV on a common grid")
    p.add_argument("--kind", help="point|peak|partial (default point)")
    p.add_argument("--p-sparse", type=float, help="fraction of sparse subjects (default 1)")
    p.add_argument("--p-curve", type=float, help="missing fraction per sparse curve")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit curves and pointwise intervals",
                       description="Write fitted.csv, lower.csv, upper.csv and summary.txt to --out.")
    _add_common(p)
    _add_grid(p)
    _add_schema(p)
    _add_fit(p)
    p.add_argument("--in", dest="input", required=True, help="long CSV")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("depth", help="depth of fitted curves", description="Write a depth CSV.")
    _add_common(p)
    p.add_argument("--fit", required=True, help="directory written by `fit`")
    p.add_argument("--methods", help="comma separated: mfhd, mbd, rmfhd_aw, rmfhd_naw, rmfhd_dm (default auto)")
    p.add_argument("--ndirs", type=int, help="projection directions (default 500)")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("outlyingness", help="directional outlyingness screen",
                       description="Write an outlyingness CSV.")
    _add_common(p)
    p.add_argument("--fit", required=True, help="directory written by `fit`")
    p.add_argument("--cutoff-q", type=float, help="cutoff level (default 0.993)")
    p.add_argument("--ndirs", type=int, help="projection directions (default 500)")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("boxplot", help="boxplot geometry from a fit", description="Write geometry JSON.")
    _add_common(p)
    _add_schema(p)
    _add_boxplot(p)
    p.add_argument("--fit", required=True, help="directory written by `fit`")
    p.add_argument("--in", dest="input", help="long CSV of the observations (for the missingness mask)")
    p.add_argument("--out", required=True, help="output JSON")

    p = sub.add_parser("render", help="SVG from geometry JSON", description="Write an SVG document.")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True, help="geometry, intensity or bundle JSON")
    p.add_argument("--intensity", action="store_true", default=None,
                   help="for a bundle, draw the intensity boxplot")
    p.add_argument("--no-contours", action="store_true", help="omit contour lines")
    p.add_argument("--svg", required=True, help="output SVG")

    p = sub.add_parser("study", help="Monte Carlo studies",
                       description="Write <study>.csv and <study>.json to --out.")
    _add_common(p)
    p.add_argument("study", choices=["depth", "detect", "coverage"])
    p.add_argument("--models", help="comma separated model ids (default 2)")
    p.add_argument("--kinds", help="comma separated sparseness kinds (default point)")
    p.add_argument("--pcurve", help="comma separated p_curve values (default 0.2)")
    p.add_argument("--p-sparse", type=float, help="fraction of sparse subjects (default 1)")
    p.add_argument("--reps", type=int, help="replications per cell (default 100)")
    p.add_argument("--n", type=int, help="subjects (default 100)")
    p.add_argument("--B", type=int, help="bootstrap resamples (default 100)")
    p.add_argument("--alpha", type=float, help="interval level (default 0.05)")
    p.add_argument("--ndirs", type=int, help="projection directions (default 500)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("pipeline", help="ingest, fit, depth, boxplot and render in one run",
                       description="Write the SVG, the geometry JSON next to it, and optionally the "
                                   "intensity SVG.")
    _add_common(p)
    _add_grid(p)
    _add_schema(p)
    _add_fit(p)
    _add_boxplot(p)
    p.add_argument("--in", dest="input", required=True, help="long CSV")
    p.add_argument("--sparse-boxplot", action="store_true", help="sparse functional boxplot (the default)")
    p.add_argument("--svg", required=True, help="output SVG")
    p.add_argument("--json", help="output geometry JSON (default: SVG path with .json)")
    p.add_argument("--plausible", help="LOW,HIGH band the fitted values must stay within")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge command line, config file and defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in raw.items()}
    out = {}
    for k, v in vars(args).items():
        if k in ("config", "verbose"):
            out[k] = v
            continue
        if v is None:
            v = cfg.get(k, DEFAULTS.get(k))
        out[k] = v
    for k, v in cfg.items():
        out.setdefault(k, v)
    if out.get("threads") is None:
        env = os.environ.get(THREADS_ENV)
        out["threads"] = int(env) if env else (os.cpu_count() or 1)
    if out["threads"] < 1:
        raise UsageError("--threads must be at least 1")
    return out


def _schema(opt) -> Optional[dict]:
    if not opt:
        return None
    if isinstance(opt, dict):
        return opt
    pairs = {}
    for item in _csv_list(opt):
        if "=" not in item:
            raise UsageError(f"schema entry {item!r} is not key=name")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip() or None
    return pairs


def _read_sample(path: str, schema=None) -> SparseSampleSet:
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest_long_csv(fh, _schema(schema))


def _grid(o: dict, sample: Optional[SparseSampleSet] = None) -> Grid:
    if o.get("domain"):
        lo, hi = _csv_list(o["domain"], float)
    elif sample is not None:
        lo = min(d[0] for d in sample.domains)
        hi = max(d[1] for d in sample.domains)
    else:
        lo, hi = 0.0, 1.0
    n = o.get("grid_points")
    if n is None:
        # reuse a small common design as the grid
        times = np.unique(np.concatenate([sample.variable(j)[1] for j in range(sample.p)])) if sample else None
        if times is not None and 2 <= times.size <= 200 and times[0] >= lo and times[-1] <= hi:
            if np.isclose(times[0], lo) and np.isclose(times[-1], hi):
                return Grid(times)
        n = 50
    return Grid.equidistant(int(n), lo, hi)


def _write(path: pathlib.Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _mask_csv(mask, grid: Grid, ids, names) -> str:
    rows = []
    n, p, G = mask.shape
    for i in range(n):
        for j in range(p):
            for c in range(G):
                rows.append([ids[i], names[j], repr(float(grid.points[c])), int(mask[i, j, c])])
    return _rows_csv(["subject_id", "variable", "time", "present"], rows)


def _matrix_csv(values: np.ndarray, grid: Grid, ids, names) -> str:
    rows = []
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            rows.append([ids[i], names[j]] + [repr(float(v)) for v in values[i, j]])
    return _rows_csv(["subject_id", "variable"] + [repr(float(t)) for t in grid.points], rows)


def _read_matrix(path: pathlib.Path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise FDataError(f"{path}: no fitted curves")
    times = np.array([float(t) for t in rows[0][2:]])
    ids, names, vals = [], [], {}
    for r in rows[1:]:
        if r[0] not in vals:
            ids.append(r[0])
            vals[r[0]] = []
        if r[1] not in names:
            names.append(r[1])
        vals[r[0]].append([float(v) for v in r[2:]])
    X = np.array([vals[s] for s in ids], dtype=float)
    return X, Grid(times), ids, names


def _read_fit(directory: str):
    d = pathlib.Path(directory)
    fitted, grid, ids, names = _read_matrix(d / "fitted.csv")
    lower = _read_matrix(d / "lower.csv")[0]
    upper = _read_matrix(d / "upper.csv")[0]
    return fitted, lower, upper, grid, ids, names


def _fit(sample: SparseSampleSet, grid: Grid, o: dict):
    opts = {"pve": o["pve"], "pve_univariate": o["pve"]}
    if o.get("bandwidth") is not None:
        opts.update(bandwidth_mean=o["bandwidth"], bandwidth_cov=o["bandwidth"])
    model = MFPCA(grid=grid, **opts).fit(sample)
    if o["method"] == "mfpca":
        res = mfpca_fit_curves(model, sample, o["alpha"])
    else:
        res = bmfpca_fit(sample, grid=grid, B=int(o["B"]), alpha=o["alpha"], seed=int(o["seed"]), **opts)
    return model, res


def _summary(model: MFPCA, res) -> str:
    lines = [
        f"method: {res.method}",
        f"B: {res.B}",
        f"alpha: {res.alpha:g}",
        f"variables: {', '.join(model.variable_names_)}",
        f"univariate components M_j: {', '.join(str(m) for m in model.block_sizes_)}",
        f"multivariate components M: {model.n_components_}",
        "eigenvalues: " + ", ".join(f"{v:.6g}" for v in model.eigenvalues_),
        "noise variances: " + ", ".join(f"{v:.6g}" for v in model.noise_var_),
    ]
    return "\n".join(lines) + "\n"


def _depth(method: str, fitted, lower, upper, grid: Grid, o: dict) -> DepthReport:
    ndirs, seed = int(o["ndirs"]), int(o["seed"])
    if method == "auto":
        method = "mbd" if fitted.shape[1] == 1 else "mfhd"
    if method == "mfhd":
        return mfhd(fitted, ndirs=ndirs, seed=seed, grid=grid)
    if method == "mbd":
        if fitted.shape[1] != 1:
            raise UsageError("mbd needs a single variable; use mfhd")
        return mbd(fitted)
    if method.startswith("rmfhd_"):
        return revised_depth(fitted, upper, lower, method[6:], ndirs=ndirs, seed=seed, grid=grid)
    raise UsageError(f"unknown depth method {method!r}")


def _geometry(fitted, lower, upper, grid, mask, ids, names, o: dict):
    dep = _depth(o["depth"], fitted, lower, upper, grid, o)
    kw = dict(factor=float(o["factor"]), mask=mask, grid=grid, variable_names=names, subject_ids=ids)
    if o["two_stage"]:
        outl = directional_outlyingness(fitted, cutoff_q=float(o["cutoff_q"]), ndirs=int(o["ndirs"]),
                                        seed=int(o["seed"]), grid=grid)
        geom = two_stage_boxplot(fitted, dep, outl, **kw)
    else:
        geom = functional_boxplot(fitted, dep, **kw)
    field = None
    if o["intensity"]:
        field = intensity_field(mask, fitted, geom.members, geom.lower, geom.upper, grid=grid,
                                norm=o["norm"], contours=bool(o["contours"]), variable_names=names)
    return geom, field


def _cmd_simulate(o: dict) -> None:
    out = pathlib.Path(o["out"])
    rng = replication_rng(int(o["seed"]), 0)
    grid = Grid.equidistant(int(o["grid_points"] or 50))
    cfg = SimConfig(model_id=int(o["model"]), n=int(o["n"]), grid=grid, p=int(o["p"]),
                    contamination=float(o["contamination"]), seed=int(o["seed"]))
    data = generate(cfg, rng)
    kinds = _csv_list(o["kind"])
    sp = SparsifyConfig(kind=kinds[0] if len(kinds) == 1 else tuple(kinds),
                        p_sparse=float(o["p_sparse"]), p_curve=float(o["p_curve"]), seed=int(o["seed"]))
    mask = sparsify(data.curves, sp, rng)
    ids = [f"S{i + 1:03d}" for i in range(cfg.n)]
    names = [f"X{j + 1}" for j in range(cfg.p)]
    sample = SparseSampleSet.from_grid(data.curves.values, mask.present, grid, ids, names)
    _write(out / "data.csv", export_long_csv(sample))
    _write(out / "mask.csv", _mask_csv(mask.present, grid, ids, names))
    _write(out / "truth.csv", _rows_csv(["subject_id", "outlier"], [[s, int(t)] for s, t in zip(ids, data.truth)]))
    echo = {"simulation": cfg.to_dict(), "sparsify": {"kind": sp.kind, "p_sparse": sp.p_sparse,
                                                        "p_curve": sp.p_curve}}
    _write(out / "config.json", json.dumps(echo, indent=2, sort_keys=True) + "\n")


def _cmd_sparsify(o: dict) -> None:
    sample = _read_sample(o["input"], o.get("schema"))
    grid = _grid(o, sample)
    full = snap_to_grid(sample, grid)
    if not full.present.all():
        raise FDataError("sparsify needs complete curves on the grid")
    values = np.zeros(full.shape)
    for j in range(sample.p):
        s, t, y = sample.variable(j)
        values[s, j, np.searchsorted(grid.points, t).clip(0, len(grid) - 1)] = y
    from .fdata import CompleteCurves

    kinds = _csv_list(o["kind"])
    sp = SparsifyConfig(kind=kinds[0] if len(kinds) == 1 else tuple(kinds), p_sparse=float(o["p_sparse"]),
                        p_curve=float(o["p_curve"]), seed=int(o["seed"]))
    mask = sparsify(CompleteCurves(values, grid), sp, replication_rng(int(o["seed"]), 0))
    out = pathlib.Path(o["out"])
    sparse = SparseSampleSet.from_grid(values, mask.present, grid, sample.subject_ids, sample.variable_names)
    _write(out / "data.csv", export_long_csv(sparse))
    _write(out / "mask.csv", _mask_csv(mask.present, grid, sample.subject_ids, sample.variable_names))


def _cmd_fit(o: dict) -> None:
    sample = _read_sample(o["input"], o.get("schema"))
    grid = _grid(o, sample)
    model, res = _fit(sample, grid, o)
    out = pathlib.Path(o["out"])
    ids, names = sample.subject_ids, sample.variable_names
    for which in ("fitted", "lower", "upper"):
        _write(out / f"{which}.csv", _matrix_csv(getattr(res, which), grid, ids, names))
    _write(out / "summary.txt", _summary(model, res))


def _cmd_depth(o: dict) -> None:
    fitted, lower, upper, grid, ids, _ = _read_fit(o["fit"])
    methods = _csv_list(o["methods"])
    if methods == ["auto"]:
        methods = ["mbd"] if fitted.shape[1] == 1 else ["mfhd"]
    rows = []
    for m in methods:
        rep = _depth(m, fitted, lower, upper, grid, o)
        name = "mfhd" if m == "mfhd" else rep.method
        rows.extend([s, name, repr(float(v)), int(r)] for s, v, r in zip(ids, rep.values, rep.ranks))
    _write(pathlib.Path(o["out"]), _rows_csv(["subject_id", "method", "depth", "rank"], rows))


def _cmd_outlyingness(o: dict) -> None:
    fitted, _, _, grid, ids, _ = _read_fit(o["fit"])
    rep = directional_outlyingness(fitted, cutoff_q=float(o["cutoff_q"]), ndirs=int(o["ndirs"]),
                                   seed=int(o["seed"]), grid=grid)
    p = rep.mo.shape[1]
    header = ["subject_id"] + [f"mo_{j + 1}" for j in range(p)] + ["vo", "flagged"]
    rows = [[s] + [repr(float(v)) for v in rep.mo[i]] + [repr(float(rep.vo[i])), int(rep.flagged[i])]
            for i, s in enumerate(ids)]
    _write(pathlib.Path(o["out"]), _rows_csv(header, rows))


def _mask_for(o: dict, grid: Grid, ids, names, shape):
    if not o.get("input"):
        return np.ones(shape, dtype=bool)
    sample = _read_sample(o["input"], o.get("schema"))
    if list(sample.subject_ids) != list(ids) or list(sample.variable_names) != list(names):
        raise FDataError("observation CSV does not match the fitted subjects and variables")
    return snap_to_grid(sample, grid).present


def _cmd_boxplot(o: dict) -> None:
    fitted, lower, upper, grid, ids, names = _read_fit(o["fit"])
    mask = _mask_for(o, grid, ids, names, fitted.shape)
    geom, field = _geometry(fitted, lower, upper, grid, mask, ids, names, o)
    _write(pathlib.Path(o["out"]), emit_json(geom, field))


def _cmd_render(o: dict) -> None:
    doc = parse_json(pathlib.Path(o["input"]).read_text(encoding="utf-8"))
    style = StyleConfig(show_contours=not o.get("no_contours"))
    if isinstance(doc, tuple):
        geom, field = doc
        svg = emit_svg(geom, style, field if o["intensity"] else None)
    else:
        svg = emit_svg(doc, style)
    _write(pathlib.Path(o["svg"]), svg)


def _cmd_study(o: dict) -> None:
    cfg = StudyConfig(
        models=tuple(_csv_list(o["models"], int)),
        kinds=tuple(_csv_list(o["kinds"])),
        p_curves=tuple(_csv_list(o["pcurve"], float)),
        p_sparse=float(o["p_sparse"]),
        reps=int(o["reps"]),
        n=int(o["n"]),
        seed=int(o["seed"]),
        B=int(o["B"]),
        alpha=float(o["alpha"]),
        ndirs=int(o["ndirs"]),
    )
    part = {"depth": "depth", "detect": "detect", "coverage": "coverage"}[o["study"]]
    reps = run_replications(cfg, (part,), n_jobs=int(o["threads"]), verbose=10 if o.get("verbose") else 0)
    if part == "depth":
        report = run_depth_study(cfg, replications=reps)
    elif part == "detect":
        report = run_detection_study(cfg, replications=reps)
    else:
        report = ci_coverage_study(cfg, replications=reps)
    out = pathlib.Path(o["out"])
    _write(out / f"{o['study']}.csv", report.to_csv())
    _write(out / f"{o['study']}.json", report.to_json())


def _cmd_pipeline(o: dict) -> None:
    sample = _read_sample(o["input"], o.get("schema"))
    grid = _grid(o, sample)
    mask = snap_to_grid(sample, grid).present
    _, res = _fit(sample, grid, o)
    if o.get("plausible"):
        lo, hi = _csv_list(o["plausible"], float)
        if res.fitted.min() < lo or res.fitted.max() > hi:
            raise FPCAError(
                f"fitted values [{res.fitted.min():.6g}, {res.fitted.max():.6g}] leave the plausible band [{lo:g}, {hi:g}]"
            )
    ids, names = sample.subject_ids, sample.variable_names
    geom, field = _geometry(res.fitted, res.lower, res.upper, grid, mask, ids, names, o)
    svg_path = pathlib.Path(o["svg"])
    json_path = pathlib.Path(o["json"]) if o.get("json") else svg_path.with_suffix(".json")
    _write(svg_path, emit_svg(geom))
    _write(json_path, emit_json(geom, field))
    if field is not None:
        _write(svg_path.with_name(svg_path.stem + "_intensity.svg"), emit_svg(geom, intensity=field))
    log.info("outliers: %d (stage1 %d, stage2 %d)", geom.outliers.size, geom.stage1.size, geom.stage2.size)


COMMANDS = {
    "simulate": _cmd_simulate,
    "sparsify": _cmd_sparsify,
    "fit": _cmd_fit,
    "depth": _cmd_depth,
    "outlyingness": _cmd_outlyingness,
    "boxplot": _cmd_boxplot,
    "render": _cmd_render,
    "study": _cmd_study,
    "pipeline": _cmd_pipeline,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line ``argv`` and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        opts = _resolve(args)
        log.info("configuration: %s", json.dumps({k: v for k, v in sorted(opts.items())}, default=str))
        COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sparsefbox: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FDataError, json.JSONDecodeError) as exc:
        print(f"sparsefbox: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FPCAError, SmoothingError, DepthError, BoxplotError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"sparsefbox: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
