import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sparsefbox.eval as ev
from sparsefbox.eval import (
    StudyConfig,
    ci_coverage_study,
    detection_rates,
    run_depth_study,
    run_detection_study,
    run_replications,
    spearman,
)
from sparsefbox.fdata import Grid, SparseSampleSet
from sparsefbox.fpca import FPCAError, fit_mfpca, mfpca_fit_curves

SMALL = dict(n=40, B=3, ndirs=50, reps=2)

# -- spearman and detection rates --------------------------------------------------


def spearman_oracle(a, b):
    n = len(a)
    return 1 - 6 * sum((x - y) ** 2 for x, y in zip(a, b)) / (n * (n * n - 1))


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30).flatmap(lambda n: st.tuples(st.permutations(range(1, n + 1)),
                                                      st.permutations(range(1, n + 1)))))
def test_spearman_formula(pair):
    a, b = pair
    r = spearman(a, b)
    assert r == pytest.approx(spearman_oracle(a, b))
    assert -1 <= r <= 1


def test_spearman_errors():
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        spearman([1, 1, 3], [1, 2, 3])


def test_detection_rate_examples():
    truth = np.zeros(100, bool)
    truth[:10] = True
    assert detection_rates(truth, truth) == (100.0, 0.0)
    assert detection_rates(np.zeros(100, bool), truth) == (0.0, 0.0)
    flags = np.zeros(100, bool)
    flags[:7] = True
    flags[50:53] = True
    pc, pf = detection_rates(flags, truth)
    assert pc == pytest.approx(70.0) and pf == pytest.approx(100 * 3 / 90)
    assert round(pf, 2) == 3.33
    assert detection_rates(flags, np.zeros(100, bool))[0] == 0.0


def test_detection_rates_permutation_invariant():
    rng = np.random.default_rng(0)
    f, t = rng.random(50) < 0.2, rng.random(50) < 0.1
    perm = rng.permutation(50)
    assert detection_rates(f, t) == detection_rates(f[perm], t[perm])


# -- configuration -----------------------------------------------------------------


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(reps=0)
    with pytest.raises(ValueError):
        StudyConfig(models=(9,))
    with pytest.raises(ValueError):
        StudyConfig(methods=())
    with pytest.raises(ValueError):
        StudyConfig(methods=("mbd",))
    with pytest.raises(ValueError):
        StudyConfig(kinds=("block",))
    assert StudyConfig(models=2).models == (2,)


# -- replication machinery ---------------------------------------------------------


def test_results_do_not_depend_on_workers():
    cfg = StudyConfig(models=(2,), **SMALL)
    a = run_replications(cfg, ("depth", "detect"), n_jobs=1)
    b = run_replications(cfg, ("depth", "detect"), n_jobs=2)
    assert [r.spearman for r in a] == [r.spearman for r in b]
    assert [r.rates for r in a] == [r.rates for r in b]
    assert run_detection_study(cfg, replications=a).to_csv() == run_detection_study(cfg, replications=b).to_csv()


def test_prefix_of_longer_run_is_shorter_run():
    short = run_replications(StudyConfig(**SMALL), ("depth",))
    long = run_replications(StudyConfig(**{**SMALL, "reps": 3}), ("depth",))
    assert [r.spearman for r in short] == [r.spearman for r in long[:2]]


def test_report_is_exchangeable_under_replication_order():
    cfg = StudyConfig(models=(3,), **SMALL)
    reps = run_replications(cfg, ("detect",))
    fwd = run_detection_study(cfg, replications=reps)
    rev = run_detection_study(cfg, replications=reps[::-1])
    for a, b in zip(fwd.rows, rev.rows):
        assert a[:5] == b[:5] and np.allclose(a[5:], b[5:])


def test_failed_fit_is_retried_then_excluded(monkeypatch):
    real = ev.bmfpca_fit
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 1:
            raise FPCAError("degenerate resample")
        return real(*args, **kwargs)

    cfg = StudyConfig(**{**SMALL, "reps": 1})
    monkeypatch.setattr(ev, "bmfpca_fit", flaky)
    (rep,) = run_replications(cfg, ("depth",))
    assert rep.retried and not rep.failed and "degenerate" in rep.error

    def broken(*args, **kwargs):
        raise FPCAError("always")

    monkeypatch.setattr(ev, "bmfpca_fit", broken)
    reps = run_replications(cfg, ("depth",))
    assert reps[0].failed
    report = run_depth_study(cfg, replications=reps)
    assert report.excluded == {"1/point/0.2": 1}
    assert report.cell(method="mfhd_bmfpca")["reps"] == 0


def test_report_formats():
    cfg = StudyConfig(**{**SMALL, "reps": 1})
    rep = run_depth_study(cfg)
    lines = rep.to_csv().strip().split("\n")
    assert lines[0] == ",".join(rep.columns)
    assert len(lines) == 1 + len(cfg.methods)
    doc = json.loads(rep.to_json())
    assert doc["study"] == "depth" and doc["config"]["reps"] == 1
    for row in rep.rows:
        r = dict(zip(rep.columns, row))
        assert -1 <= r["q1"] <= r["median"] <= r["q3"] <= 1
    with pytest.raises(KeyError):
        rep.cell(method="nope")


def test_complete_noise_free_data_gives_near_perfect_ranks(monkeypatch):
    real = ev.generate

    def noise_free(cfg, rng):
        d = real(cfg, rng)
        return dataclasses.replace(d, curves=d.signal)

    monkeypatch.setattr(ev, "generate", noise_free)
    cfg = StudyConfig(p_curves=(0.0,), reps=1, B=20)
    (rep,) = run_replications(cfg, ("depth",))
    assert all(v >= 0.99 for v in rep.spearman.values()), rep.spearman


def test_coverage_alpha_monotone():
    cfg = StudyConfig(n=50, B=10, reps=3)
    wide = ci_coverage_study(cfg, alpha=0.05)
    narrow = ci_coverage_study(cfg, alpha=0.5)
    for fit in ("mfpca", "bmfpca"):
        assert narrow.cell(method=fit)["coverage"] < wide.cell(method=fit)["coverage"]
        assert narrow.cell(method=fit)["half_width"] < wide.cell(method=fit)["half_width"]


def test_noiseless_dense_intervals_cover_at_near_zero_width():
    g = Grid.equidistant(100)
    t = g.points
    a = np.random.default_rng(4).normal(size=(40, 2))
    X = np.stack([a[:, :1] * np.sin(2 * np.pi * t), a[:, 1:] * np.cos(4 * np.pi * t)], axis=1)
    s = SparseSampleSet.from_grid(X, np.ones(X.shape, bool), g)
    res = mfpca_fit_curves(fit_mfpca(s, grid=g), s)
    assert np.all((X >= res.lower) & (X <= res.upper))
    assert res.half_width.max() < 1e-3


# -- Monte Carlo checks from the shared replications -------------------------------


@pytest.mark.slow
def test_two_stage_dominates_sparse_per_replication(replications):
    reps = replications.get(2, 0.2, ("detect",), 100)
    wins = [r.rates["two_stage"][0] >= r.rates["sparse"][0] for r in reps if not r.failed]
    assert np.mean(wins) >= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("p_curve", [0.2, 0.6])
def test_model5_sparse_boxplot_misses_shape_outliers(replications, p_curve):
    reps = replications.get(5, p_curve, ("detect",), 100 if p_curve == 0.2 else 20)
    pc = np.mean([r.rates["sparse"][0] for r in reps if not r.failed])
    assert pc <= 1.0


@pytest.mark.slow
def test_sparser_curves_weaken_rank_association(replications):
    cfgs = {pc: replications.config(1, pc, 20) for pc in (0.2, 0.6)}
    med = {pc: run_depth_study(cfgs[pc], replications=replications.get(1, pc, ("depth",), 20))
           for pc in cfgs}
    for m in cfgs[0.2].methods:
        assert med[0.2].cell(method=m)["median"] >= med[0.6].cell(method=m)["median"], m
