import numpy as np

from sparsefbox.data import cd4_csv_text, load_cd4, synthetic_cd4
from sparsefbox.fdata import ingest_long_csv


def test_bundled_cd4_shape():
    d = load_cd4()
    assert d.n == 366 and d.p == 1
    assert list(d.variable_names) == ["cd4"]
    assert len(set(d.subject_ids)) == 366


def test_bundled_cd4_matches_generator():
    rows = synthetic_cd4()
    assert load_cd4().n_observations == len(rows)
    months = np.array([r[2] for r in rows])
    assert months.min() >= -18 and months.max() <= 42
    assert all(r[3] > 0 for r in rows)
    per_subject = {}
    for sid, _, m, _ in rows:
        per_subject.setdefault(sid, []).append(m)
    assert all(len(v) == len(set(v)) for v in per_subject.values())


def test_cd4_text_round_trips():
    assert ingest_long_csv(cd4_csv_text()).n_observations == load_cd4().n_observations
