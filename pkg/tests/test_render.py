import json
import re

import numpy as np
import pytest

from sparsefbox.boxplot import functional_boxplot, intensity_field, two_stage_boxplot
from sparsefbox.depth import OutlyingnessReport, directional_outlyingness, mfhd
from sparsefbox.fdata import Grid
from sparsefbox.render import SCHEMA_VERSION, StyleConfig, colormap, emit_json, emit_svg, parse_json
from sparsefbox.simgen import SimConfig, SparsifyConfig, generate, replication_rng, sparsify

DASHED_PATH = re.compile(r'<path [^>]*stroke-dasharray[^>]*/>')


def dashed_paths(svg: str) -> list:
    return DASHED_PATH.findall(svg)


def stroke(el: str) -> str:
    return re.search(r'stroke="(#[0-9A-Fa-f]{6})"', el).group(1)


def sample(model=6, p_curve=0.2, seed=0):
    rng = replication_rng(seed, model)
    d = generate(SimConfig(model_id=model, n=100), rng)
    m = sparsify(d.curves, SparsifyConfig(p_curve=p_curve), rng)
    return d.curves.values, m


@pytest.fixture(scope="module")
def populated():
    X, m = sample()
    geo = two_stage_boxplot(X, mfhd(X), directional_outlyingness(X), mask=m, grid=Grid.equidistant(50))
    field = intensity_field(m, X, geo.members, geo.lower, geo.upper, contours=True,
                            variable_names=geo.variable_names)
    return geo, field


def test_no_outliers_no_dashed_paths():
    X = np.random.default_rng(0).normal(size=(20, 2, 10)) * 0.01 + np.linspace(0, 1, 10)
    X = np.sort(X, axis=0)
    geo = functional_boxplot(X, mfhd(X), factor=100.0)
    assert geo.outliers.size == 0
    assert dashed_paths(emit_svg(geo)) == []


def test_one_outlier_per_stage_gives_two_dashed_paths():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 1, 12))
    X[0] += 40.0  # far off the fences
    X[1] += 40.0
    flags = np.zeros(30, bool)
    flags[0] = True
    outl = OutlyingnessReport(np.zeros((30, 1)), np.zeros(30), flags)
    geo = two_stage_boxplot(X, mfhd(X), outl)
    assert geo.stage1.tolist() == [0] and geo.stage2.tolist() == [1]
    style = StyleConfig()
    paths = dashed_paths(emit_svg(geo, style))
    assert len(paths) == 2
    assert sorted(stroke(p) for p in paths) == sorted([style.stage1, style.stage2])


def test_missing_segments_are_gray(populated):
    geo, _ = populated
    style = StyleConfig()
    paths = dashed_paths(emit_svg(geo, style))
    colors = {stroke(p) for p in paths}
    assert colors <= {style.stage1, style.stage2, style.missing}
    if not geo.outlier_observed.all():
        assert style.missing in colors


def test_svg_is_deterministic(populated):
    geo, field = populated
    assert emit_svg(geo) == emit_svg(geo)
    assert emit_svg(geo, intensity=field) == emit_svg(geo, intensity=field)
    assert emit_svg(field) == emit_svg(field)
    svg = emit_svg(geo)
    assert svg.count('class="panel"') == 3
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_json_round_trip(populated):
    geo, field = populated
    assert parse_json(emit_json(geo)) == geo
    assert parse_json(emit_json(field)) == field
    g2, f2 = parse_json(emit_json(geo, field))
    assert g2 == geo and f2 == field
    assert emit_json(geo) == emit_json(parse_json(emit_json(geo)))


def test_empty_intensity_field():
    X = np.random.default_rng(2).normal(size=(20, 2, 8))
    geo = functional_boxplot(X, mfhd(X))
    f = intensity_field(np.ones(X.shape, bool), X, geo.members, geo.lower, geo.upper, norm="global")
    doc = json.loads(emit_json(f))
    assert doc["intensity"] == []
    assert doc["normalization"] == "global"
    assert parse_json(emit_json(f)) == f


def test_schema_version(populated):
    geo, field = populated
    for text in (emit_json(geo), emit_json(field), emit_json(geo, field)):
        assert json.loads(text)["schema_version"] == SCHEMA_VERSION
    bad = json.loads(emit_json(geo))
    bad["schema_version"] = "0.0"
    with pytest.raises(ValueError):
        parse_json(json.dumps(bad))


def test_style_validation():
    with pytest.raises(ValueError):
        StyleConfig(stage1="red")
    with pytest.raises(ValueError):
        StyleConfig(panel_width=0)
    with pytest.raises(ValueError):
        StyleConfig(intensity_colors=("#FFFFFF",))
    assert StyleConfig(stage2="#123abc").stage2 == "#123abc"


def test_colormap_ends():
    style = StyleConfig()
    assert colormap(np.array([0.0, 1.0]), style) == [style.intensity_colors[-1].upper(),
                                                     style.intensity_colors[0].upper()]


def test_envelope_pixels_preserve_order(populated):
    geo, _ = populated
    svg = emit_svg(geo)
    lines = re.findall(r'<polyline class="envelope" points="([^"]+)"', svg)
    assert len(lines) == 2 * geo.p
    for lo, hi in zip(lines[::2], lines[1::2]):
        y_lo = np.array([float(pt.split(",")[1]) for pt in lo.split()])
        y_hi = np.array([float(pt.split(",")[1]) for pt in hi.split()])
        assert np.all(y_hi <= y_lo + 1e-9)  # larger values sit higher on screen


def test_svg_numbers_have_six_digits(populated):
    geo, _ = populated
    nums = re.findall(r'-?\d+\.\d+(?:e[-+]?\d+)?', emit_svg(geo))
    assert all(len(re.sub(r"[^0-9]", "", n.split("e")[0]).lstrip("0")) <= 6 for n in nums)


def test_emit_rejects_other_types():
    with pytest.raises(TypeError):
        emit_svg("not a geometry")
    with pytest.raises(TypeError):
        emit_json(3)
