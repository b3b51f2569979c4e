import numpy as np
import pytest

from sparsefbox.boxplot import (
    BoxplotError,
    central_region,
    functional_boxplot,
    intensity_field,
    sparseness_profile,
    two_stage_boxplot,
)
from sparsefbox.depth import DepthReport, OutlyingnessReport, directional_outlyingness, mfhd
from sparsefbox.fdata import CompleteCurves, Grid
from sparsefbox.simgen import SimConfig, SparsifyConfig, generate, replication_rng, sparsify

G10 = Grid.equidistant(10)


def constant_curves(levels, G=10):
    return np.array(levels, float)[:, None, None] * np.ones((1, 1, G))


def report_from_order(order):
    """Depth report whose deepest curves are listed first in ``order``."""
    n = len(order)
    vals = np.empty(n)
    vals[list(order)] = np.linspace(1.0, 0.1, n)
    return DepthReport("test", vals)


def no_flags(n, p=1):
    return OutlyingnessReport(np.zeros((n, p)), np.zeros(n), np.zeros(n, bool))


def model_sample(model=1, p_curve=0.2, seed=0, n=100):
    rng = replication_rng(seed, model)
    d = generate(SimConfig(model_id=model, n=n), rng)
    m = sparsify(d.curves, SparsifyConfig(p_curve=p_curve), rng)
    return d, m


# -- central region and fences -----------------------------------------------------


def test_central_region_of_four_constants():
    X = constant_curves([1, 2, 3, 4])
    members, lo, hi = central_region(X, report_from_order([1, 2, 0, 3]))
    assert sorted(members) == [1, 2]
    assert np.all(lo == 2) and np.all(hi == 3)


def test_identical_curves_zero_width_and_ceiling_rule():
    X = constant_curves([5, 5, 5])
    members, lo, hi = central_region(X, mfhd(X))
    assert members.size == 2
    assert np.array_equal(lo, hi)


def test_fences_and_flag():
    X = constant_curves([2, 3, 2.5, 10])
    geo = functional_boxplot(X, report_from_order([0, 1, 2, 3]))
    assert np.allclose(geo.lower, 2) and np.allclose(geo.upper, 3)
    assert np.allclose(geo.fence_lower, 0.5) and np.allclose(geo.fence_upper, 4.5)
    assert geo.outliers.tolist() == [3]
    assert geo.outlier_stage == ("stage2",)


def test_geometry_invariants():
    d, m = model_sample(2)
    X = d.curves.values
    geo = functional_boxplot(X, mfhd(X), mask=m)
    assert np.all(geo.lower <= geo.median) and np.all(geo.median <= geo.upper)
    assert np.all(geo.fence_lower <= geo.lower) and np.all(geo.upper <= geo.fence_upper)
    assert np.all((geo.sparseness >= 0) & (geo.sparseness <= 1))
    assert geo.median_index == geo.members[0]
    assert geo.reference == 0.5
    inside = np.setdiff1d(np.arange(X.shape[0]), geo.outliers)
    assert np.all(X[inside] >= geo.fence_lower) and np.all(X[inside] <= geo.fence_upper)


def test_factor_must_be_positive():
    X = constant_curves([1, 2, 3])
    with pytest.raises(BoxplotError):
        functional_boxplot(X, mfhd(X), factor=0)


def test_geometry_depends_on_ranks_only():
    X = np.random.default_rng(0).normal(size=(30, 2, 10))
    r = mfhd(X)
    squashed = DepthReport("x", r.values**3 / 2)
    assert np.array_equal(squashed.ranks, r.ranks)
    assert functional_boxplot(X, r) == functional_boxplot(X, squashed)


def test_median_tags_follow_the_mask():
    d, m = model_sample()
    X = d.curves.values
    geo = functional_boxplot(X, mfhd(X), mask=m)
    assert np.array_equal(geo.median_observed, m.present[geo.median_index])
    tags = geo.cell_tags()
    for k, i in enumerate(geo.outliers):
        assert (np.array(tags[k]) == "missing").tolist() == (~m.present[i]).tolist()


# -- two-stage ---------------------------------------------------------------------


def test_two_stage_without_flags_is_plain_boxplot():
    d, m = model_sample(4)
    X = d.curves.values
    r = mfhd(X)
    assert two_stage_boxplot(X, r, no_flags(100, 3), mask=m) == functional_boxplot(X, r, mask=m)


def test_two_stage_stages_are_disjoint():
    d, m = model_sample(6)
    X = d.curves.values
    outl = directional_outlyingness(X)
    geo = two_stage_boxplot(X, mfhd(X), outl, mask=m)
    s1, s2 = set(geo.stage1.tolist()), set(geo.stage2.tolist())
    assert not s1 & s2
    assert s1 | s2 == set(geo.outliers.tolist())
    assert s1 == set(np.flatnonzero(outl.flagged).tolist())
    assert not set(geo.members.tolist()) & s1


def test_two_stage_degenerate_remainder():
    X = np.random.default_rng(1).normal(size=(5, 1, 4))
    flags = OutlyingnessReport(np.zeros((5, 1)), np.zeros(5), np.array([1, 1, 1, 1, 0], bool))
    with pytest.raises(BoxplotError):
        two_stage_boxplot(X, mfhd(X), flags)
    with pytest.raises(BoxplotError):
        two_stage_boxplot(X, mfhd(X), no_flags(4))


def test_complete_mask_reduces_to_plain_boxplot():
    X = np.random.default_rng(2).normal(size=(40, 3, 12))
    r = mfhd(X)
    full = np.ones(X.shape, bool)
    assert functional_boxplot(X, r, mask=full) == functional_boxplot(X, r)
    geo = functional_boxplot(X, r)
    f = intensity_field(full, X, geo.members, geo.lower, geo.upper)
    assert all(np.all(a == 0) for a in f.intensity)
    assert f.n_events.tolist() == [0, 0, 0] and f.contours in ([], [[], [], []])


# -- sparseness profile ------------------------------------------------------------


def test_profile_fully_observed():
    lo, hi = np.zeros((1, 10)), np.ones((1, 10))
    s, b = sparseness_profile(np.ones((4, 1, 10), bool), [0, 1, 2, 3], lo, hi, G10.points)
    assert np.all(s == 0) and np.allclose(b, hi)


def test_profile_half_missing():
    mask = np.ones((4, 1, 10), bool)
    mask[:2, 0, 5] = False
    s, _ = sparseness_profile(mask, [0, 1, 2, 3], np.zeros((1, 10)), np.ones((1, 10)), G10.points)
    assert s[0, 5] == 0.5


def test_profile_uses_members_only():
    rng = np.random.default_rng(3)
    mask = rng.random((10, 2, 10)) < 0.7
    members = np.array([7, 2, 4])
    lo, hi = np.zeros((2, 10)), np.ones((2, 10))
    s, b = sparseness_profile(mask, members, lo, hi, G10.points)
    s2, b2 = sparseness_profile(mask[members], [0, 1, 2], lo, hi, G10.points)
    assert np.array_equal(s, s2) and np.array_equal(b, b2)
    with pytest.raises(BoxplotError):
        sparseness_profile(mask, [], lo, hi, G10.points)


def test_profile_point_sparseness_level():
    d, m = model_sample(1, 0.2)
    X = d.curves.values
    geo = functional_boxplot(X, mfhd(X), mask=m)
    assert 0.15 <= geo.sparseness.mean() <= 0.25


# -- intensity ---------------------------------------------------------------------


def test_intensity_normalization():
    d, m = model_sample(1, 0.3)
    X = d.curves.values
    geo = functional_boxplot(X, mfhd(X), mask=m)
    f = intensity_field(m, X, geo.members, geo.lower, geo.upper, contours=True)
    for a in f.intensity:
        assert a.min() >= 0 and abs(a.max() - 1) < 1e-9
        assert a.shape == (100, 100)
    assert len(f.contours) == 3 and all(lv in (0.25, 0.5, 0.75) for lv, _ in f.contours[0])
    g = intensity_field(m, X, geo.members, geo.lower, geo.upper, norm="global")
    maxima = np.array([a.max() for a in g.intensity])
    assert np.all(maxima <= 1 + 1e-12) and abs(maxima.max() - 1) < 1e-12
    assert np.allclose(g.mass(), f.mass())
    with pytest.raises(BoxplotError):
        intensity_field(m, X, geo.members, geo.lower, geo.upper, norm="max")


def test_intensity_mass_grows_with_sparseness():
    masses = []
    for pc in (0.2, 0.6):
        d, m = model_sample(1, pc, seed=5)
        X = d.curves.values
        geo = functional_boxplot(X, mfhd(X), mask=m)
        f = intensity_field(m, X, geo.members, geo.lower, geo.upper,
                            bandwidths=(0.05, 0.5), norm="none")
        masses.append(f.mass().sum())
    assert masses[1] > masses[0]


def test_intensity_is_zero_outside_envelope():
    d, m = model_sample(1, 0.4)
    X = d.curves.values
    geo = functional_boxplot(X, mfhd(X), mask=m)
    f = intensity_field(m, X, geo.members, geo.lower, geo.upper)
    for j in range(3):
        lo = np.interp(f.times, geo.times, geo.lower[j])
        hi = np.interp(f.times, geo.times, geo.upper[j])
        outside = (f.values[j][None] < lo[:, None]) | (f.values[j][None] > hi[:, None])
        assert np.all(f.intensity[j][outside] == 0)


def test_complete_curves_input():
    d, m = model_sample()
    cc = CompleteCurves(d.curves.values, d.curves.grid)
    geo = functional_boxplot(cc, mfhd(cc), mask=m, variable_names=["a", "b", "c"])
    assert geo.variable_names == ("a", "b", "c")
    assert np.array_equal(geo.times, d.curves.grid.points)
