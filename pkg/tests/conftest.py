"""Shared fixtures: memoized Monte Carlo replications and the acceptance summary."""

from __future__ import annotations

import os

import pytest

from sparsefbox.eval import StudyConfig, run_replications

# a cap on replications for quick smoke runs of the slow suites; unset for full scale
REPS_CAP = int(os.environ.get("SPARSEFBOX_TEST_REPS", "0")) or None
STUDY_SEED = 0

ACCEPTANCE_LINES: list[str] = []


def capped(reps: int) -> int:
    return min(reps, REPS_CAP) if REPS_CAP else reps


class ReplicationCache:
    """Run each (model, p_curve) cell once per session and slice it for smaller requests.

    Replication streams depend only on (seed, model, index), so the first
    ``r`` replications of a longer run are exactly a run with ``reps=r``.
    """

    def __init__(self):
        self._runs = {}

    def get(self, model: int, p_curve: float, parts, reps: int, kind: str = "point"):
        parts = frozenset(parts)
        reps = capped(reps)
        key = (model, kind, p_curve)
        for (k, have), (r, out) in self._runs.items():
            if k == key and parts <= have and r >= reps:
                return out[:reps]
        cfg = self.config(model, p_curve, reps, kind)
        out = run_replications(cfg, tuple(sorted(parts)))
        self._runs[(key, parts)] = (reps, out)
        return out

    @staticmethod
    def config(model: int, p_curve: float, reps: int, kind: str = "point") -> StudyConfig:
        return StudyConfig(models=(model,), kinds=(kind,), p_curves=(p_curve,), reps=capped(reps),
                           seed=STUDY_SEED)


@pytest.fixture(scope="session")
def replications():
    return ReplicationCache()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
