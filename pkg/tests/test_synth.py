import pytest

from oracles import saturate
from tpgsolve.engine import dump_library
from tpgsolve.formal import goal_satisfied, save_corpus
from tpgsolve.harness import stratify
from tpgsolve.loop import SolveConfig, solve
from tpgsolve.planners import OraclePlanner
from tpgsolve.synth import GeneratorSpec, _LibraryView, gen_corpus, gen_library, gen_problem


def test_library_deterministic():
    spec = GeneratorSpec(seed=1, library_size=50, layers=3, clusters=4)
    assert dump_library(gen_library(spec)) == dump_library(gen_library(spec))


def test_library_size_exact():
    assert len(gen_library(GeneratorSpec(library_size=300))) == 300


def test_layered_premises():
    spec = GeneratorSpec(seed=2, library_size=60, layers=4, clusters=3)
    lib = gen_library(spec)
    layer = {}
    for s in lib:
        layer[s.conclusion_names[0]] = int(s.name.split("_l")[1].split("_")[0])
    for s in lib:
        k = layer[s.conclusion_names[0]]
        earlier = [layer[n] for n in s.premise_names if n in layer]
        assert all(e < k for e in earlier)
        if k > 1:
            assert earlier, s.name
    assert len({s.conclusion_names[0] for s in lib}) == len(lib)


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(layers=1)


def test_depth_one_problem():
    lib = gen_library(GeneratorSpec(seed=3, library_size=50, layers=3, clusters=4))
    p = gen_problem(9, lib, 1)
    assert len(p.trace) == 1
    r = solve(p, None, lib, SolveConfig(use_retrieval=False, use_tpg=False), OraclePlanner(p.trace))
    assert r.solved and r.steps_used == 1


def test_depth_eleven_is_top_level():
    lib = gen_library(GeneratorSpec(seed=0))
    p = gen_problem(1, lib, 11)
    assert len(p.trace) == 11
    assert stratify(len(p.trace)) == "L6"


def test_trace_replays_and_goal_fresh():
    lib = gen_library(GeneratorSpec(seed=4, library_size=80, layers=5, clusters=4))
    for d in range(1, 8):
        p = gen_problem(d, lib, d)
        assert not goal_satisfied(p.initial_state(), p.goal)
        r = solve(p, None, lib, SolveConfig(use_retrieval=False, use_tpg=False), OraclePlanner(p.trace))
        assert r.solved and r.steps_used == d


def test_minimality_by_exhaustive_saturation():
    spec = GeneratorSpec(seed=5, library_size=40, layers=4, clusters=2)
    lib = gen_library(spec)
    view = _LibraryView(lib)
    schemas = list(lib)
    for i, depth in enumerate([1, 2, 3, 4, 2, 3, 4, 4]):
        p = gen_problem(f"m{i}", lib, depth, entities=5, distractor_factor=2.0, _view=view)
        goal = p.goal.fact
        assert goal not in set(p.premises)
        assert goal in saturate(p.premises, schemas)
        for t in set(p.trace):
            rest = [s for s in schemas if s.name != t]
            assert goal not in saturate(p.premises, rest), (p.id, t)


def test_corpus_bytes_are_pure(tmp_path):
    spec = GeneratorSpec(seed=6, library_size=60, layers=4, clusters=3, problems_per_bucket=2)
    a, b = gen_corpus(spec), gen_corpus(spec)
    save_corpus(tmp_path / "a.json", a.problems, a.manifest)
    save_corpus(tmp_path / "b.json", b.problems, b.manifest)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_bucket_depths_respected():
    spec = GeneratorSpec(seed=7, problems_per_bucket=3)
    corpus = gen_corpus(spec)
    assert len(corpus.problems) == 18
    for p in corpus.problems:
        assert p.level == stratify(len(p.trace))
    levels = [p.level for p in corpus.problems]
    assert all(levels.count(f"L{i}") == 3 for i in range(1, 7))
