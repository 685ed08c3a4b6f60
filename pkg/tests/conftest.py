"""Shared fixtures: the five full convergence studies, run once per session.

Each fixture returns ``(StudyReport, wall_seconds)``.  The N = 128 meshes
carry ~131k unknowns, so a full column takes minutes; every test that needs
study data must go through these fixtures rather than re-running solves.
"""

import time

import pytest

from crflow.analysis import run_study

FULL_N = [4, 8, 16, 32, 64, 128]


def _timed_study(example, grading, eps):
    t0 = time.perf_counter()
    report = run_study(example, grading, eps, FULL_N)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def study_ex1_eps1():
    return _timed_study("example1", "power", 1.0)


@pytest.fixture(scope="session")
def study_ex1_eps2():
    return _timed_study("example1", "power", 2.0)


@pytest.fixture(scope="session")
def study_ex1_eps4():
    return _timed_study("example1", "power", 4.0)


@pytest.fixture(scope="session")
def study_ex2_mesh1():
    return _timed_study("example2", "power", 1.0)


@pytest.fixture(scope="session")
def study_ex2_mesh2():
    return _timed_study("example2", "cosine", 1.0)
