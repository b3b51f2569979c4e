import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sparsefbox.cli import build_parser, run
from sparsefbox.data import load_cd4, write_cd4
from sparsefbox.fdata import ingest_long_csv
from sparsefbox.render import parse_json

FAST = ["--B", "3", "--ndirs", "50"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A simulated sparse Model 6 sample, its fit, and derived files."""
    d = tmp_path_factory.mktemp("cli")
    assert run(["simulate", "--model", "6", "--n", "40", "--p-curve", "0.3", "--seed", "1",
                "--out", str(d / "sim")]) == 0
    assert run(["fit", "--in", str(d / "sim" / "data.csv"), "--B", "3", "--seed", "1",
                "--out", str(d / "fit")]) == 0
    return d


def test_simulate_outputs(workdir):
    sim = workdir / "sim"
    data = ingest_long_csv((sim / "data.csv").read_text())
    assert data.n == 40 and data.p == 3
    mask = rows(sim / "mask.csv")
    assert len(mask) == 40 * 3 * 50
    present = sum(r["present"] in ("1", "true", "True") for r in mask)
    assert present == data.n_observations
    truth = rows(sim / "truth.csv")
    assert sum(int(r["outlier"]) for r in truth) == 4
    assert json.loads((sim / "config.json").read_text())["simulation"]["model_id"] == 6


def test_fit_outputs(workdir):
    fit = workdir / "fit"
    for name in ("fitted", "lower", "upper"):
        r = rows(fit / f"{name}.csv")
        assert len(r) == 40 * 3
        assert len(r[0]) == 2 + 50
    lo = np.array([[float(v) for v in list(r.values())[2:]] for r in rows(fit / "lower.csv")])
    hi = np.array([[float(v) for v in list(r.values())[2:]] for r in rows(fit / "upper.csv")])
    assert np.all(lo <= hi)
    assert "eigenvalues" in (fit / "summary.txt").read_text()


def test_depth_and_outlyingness(workdir, tmp_path):
    out = tmp_path / "depth.csv"
    assert run(["depth", "--fit", str(workdir / "fit"), "--methods", "mfhd,rmfhd_aw",
                "--ndirs", "50", "--out", str(out)]) == 0
    r = rows(out)
    assert {x["method"] for x in r} == {"mfhd", "rmfhd_aw"}
    ranks = sorted(int(x["rank"]) for x in r if x["method"] == "mfhd")
    assert ranks == list(range(1, 41))
    out2 = tmp_path / "outl.csv"
    assert run(["outlyingness", "--fit", str(workdir / "fit"), "--ndirs", "50", "--out", str(out2)]) == 0
    r2 = rows(out2)
    assert len(r2) == 40 and {"mo_1", "mo_3", "vo", "flagged"} <= set(r2[0])


def test_boxplot_and_render(workdir, tmp_path):
    geo_path = tmp_path / "geo.json"
    assert run(["boxplot", "--fit", str(workdir / "fit"), "--in", str(workdir / "sim" / "data.csv"),
                "--two-stage", "--intensity", "--contours", "--ndirs", "50", "--out", str(geo_path)]) == 0
    geo, field = parse_json(geo_path.read_text())
    assert geo.p == 3 and field.p == 3
    assert not geo.median_observed.all()
    svg = tmp_path / "box.svg"
    assert run(["render", "--in", str(geo_path), "--intensity", "--svg", str(svg)]) == 0
    assert svg.read_text().startswith("<")
    svg2 = tmp_path / "box2.svg"
    assert run(["render", "--in", str(geo_path), "--intensity", "--svg", str(svg2)]) == 0
    assert svg.read_bytes() == svg2.read_bytes()


def test_sparsify_command(workdir, tmp_path):
    sim = tmp_path / "full"
    assert run(["simulate", "--model", "1", "--n", "10", "--out", str(sim)]) == 0
    out = tmp_path / "sparse"
    assert run(["sparsify", "--in", str(sim / "data.csv"), "--kind", "peak", "--p-curve", "0.4",
                "--seed", "2", "--out", str(out)]) == 0
    full = ingest_long_csv((sim / "data.csv").read_text())
    sparse = ingest_long_csv((out / "data.csv").read_text())
    assert sparse.n_observations < full.n_observations


def test_study_is_deterministic(tmp_path):
    args = ["study", "detect", "--models", "2", "--reps", "2", "--n", "30"] + FAST
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a, b = (tmp_path / "a" / "detect.csv").read_text(), (tmp_path / "b" / "detect.csv").read_text()
    assert a == b
    assert json.loads((tmp_path / "a" / "detect.json").read_text())["study"] == "detect"


def test_pipeline_on_bundled_data(tmp_path):
    data = tmp_path / "cd4.csv"
    write_cd4(data)
    assert ingest_long_csv(data.read_text()).n == load_cd4().n
    svg = tmp_path / "cd4.svg"
    args = ["pipeline", "--in", str(data), "--B", "5", "--seed", "0", "--svg", str(svg), "--intensity"]
    assert run(args) == 0
    geo = parse_json((tmp_path / "cd4.json").read_text())
    geo = geo[0] if isinstance(geo, tuple) else geo
    assert geo.p == 1
    assert (tmp_path / "cd4_intensity.svg").exists()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": 2, "n": 12, "p-curve": 0.2}))
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    echo = json.loads((tmp_path / "a" / "config.json").read_text())
    assert echo["simulation"]["model_id"] == 2 and echo["simulation"]["n"] == 12
    assert echo["sparsify"]["p_curve"] == 0.2
    assert run(["simulate", "--config", str(cfg), "--n", "15", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "config.json").read_text())["simulation"]["n"] == 15


def test_exit_codes(tmp_path, capsys):
    assert run([]) == 2
    assert run(["simulate"]) == 2  # missing --out
    assert run(["simulate", "--model", "9", "--out", str(tmp_path / "x")]) == 2
    assert run(["fit", "--in", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "f")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("subject_id,variable,time,value\nA,x,0.1,NaN\n")
    assert run(["fit", "--in", str(bad), "--out", str(tmp_path / "f")]) == 3
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert run(["simulate", "--config", str(broken), "--out", str(tmp_path / "y")]) == 3
    one = tmp_path / "one.csv"
    one.write_text("subject_id,variable,time,value\nA,x,0.1,1\nA,x,0.5,2\nA,x,0.9,3\n")
    assert run(["fit", "--in", str(one), "--out", str(tmp_path / "f1")]) == 4


def test_plausibility_band_failure_is_numeric(tmp_path):
    data = tmp_path / "cd4.csv"
    write_cd4(data)
    code = run(["pipeline", "--in", str(data), "--B", "3", "--svg", str(tmp_path / "x.svg"),
                "--plausible=0,1"])
    assert code == 4


def test_mbd_needs_one_variable(workdir, tmp_path):
    assert run(["depth", "--fit", str(workdir / "fit"), "--methods", "mbd", "--out",
                str(tmp_path / "d.csv")]) == 2


def test_help_and_console_script():
    parser = build_parser()
    text = parser.format_help()
    for cmd in ("simulate", "sparsify", "fit", "depth", "outlyingness", "boxplot", "render",
                "study", "pipeline"):
        assert cmd in text
    out = subprocess.run([sys.executable, "-m", "sparsefbox", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "pipeline" in out.stdout
