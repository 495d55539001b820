import functools

import pytest

from tpgsolve.engine import load_library
from tpgsolve.formal import load_problem
from tpgsolve.retrieval import build_index
from tpgsolve.synth import GeneratorSpec, gen_corpus, gen_problems

GEOMETRY_LIBRARY = {
    "theorems": [
        {
            "name": "parallel_symmetry",
            "premises": ["Parallel(?x,?y)"],
            "conclusions": ["Parallel(?y,?x)"],
        },
        {
            "name": "parallel_transitivity",
            "premises": ["Parallel(?x,?y)", "Parallel(?y,?z)"],
            "conclusions": ["Parallel(?x,?z)"],
        },
        {
            "name": "perpendicular_to_parallel",
            "premises": ["Perpendicular(?x,?z)", "Perpendicular(?y,?z)"],
            "conclusions": ["Parallel(?x,?y)"],
        },
        {
            "name": "triangle_angle_sum",
            "premises": [
                "Triangle(?t)",
                {"measure": "angle_a", "subject": "?t", "as": "a"},
                {"measure": "angle_b", "subject": "?t", "as": "b"},
            ],
            "conclusions": [],
            "measure_rule": {"measure": "angle_c", "subject": "?t", "expr": "180 - a - b"},
        },
    ]
}


@pytest.fixture
def geo_library():
    return load_library(GEOMETRY_LIBRARY)


@pytest.fixture
def triangle_problem():
    return load_problem(
        {
            "id": "tri-1",
            "text": "In triangle ABC angle A is 50 and angle B is 60. Find angle C.",
            "premises": ["Triangle(ABC)", ["angle_a", "ABC", 50], ["angle_b", "ABC", 60]],
            "goal": {"type": "measure", "kind": "angle_c", "subject": "ABC", "value": 70},
            "trace": ["triangle_angle_sum"],
        }
    )


@functools.lru_cache(maxsize=None)
def synthetic(seed=0, per_bucket=100, test_per_bucket=20, library_size=300):
    """Library, training corpus, self-index and a held-out test split (cached per session)."""
    spec = GeneratorSpec(seed=seed, library_size=library_size, problems_per_bucket=per_bucket)
    corpus = gen_corpus(spec)
    index = build_index(corpus.problems, corpus.library)
    test_spec = GeneratorSpec(seed=seed, library_size=library_size, problems_per_bucket=test_per_bucket)
    test = gen_problems(test_spec, corpus.library, "test")
    return corpus.library, corpus.problems, index, test


@functools.lru_cache(maxsize=None)
def small_synthetic(seed=0):
    return synthetic(seed=seed, per_bucket=8, test_per_bucket=2, library_size=120)


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
