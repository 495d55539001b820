import random
from fractions import Fraction

import pytest

from conftest import small_synthetic
from oracles import closure, fused_weights, replay_edges
from randgen import random_edge_set
from tpgsolve.engine import START, load_library
from tpgsolve.formal import load_problem
from tpgsolve.tpg import PrecedenceGraph, ReplayError, descendants, export_dot, extract_tpg, fuse_graphs

CHAIN_LIBRARY = load_library(
    {
        "theorems": [
            {"name": "A", "premises": ["P(?x)"], "conclusions": ["Q(?x)"]},
            {"name": "B", "premises": ["Q(?x)"], "conclusions": ["R(?x)"]},
            {"name": "C", "premises": ["S(?x)"], "conclusions": ["T(?x)"]},
        ]
    }
)


def _problem(trace, premises=("P(X)", "S(X)")):
    return load_problem(
        {"id": "p", "premises": list(premises), "goal": {"type": "predicate", "fact": "R(X)"}, "trace": list(trace)}
    )


def test_linear_dependency():
    g = extract_tpg(_problem(["A", "B"]), ["A", "B"], CHAIN_LIBRARY)
    assert g.edges == [("A", "B"), (START, "A")]


def test_independent_steps():
    g = extract_tpg(_problem(["A", "C"]), ["A", "C"], CHAIN_LIBRARY)
    assert set(g.edges) == {(START, "A"), (START, "C")}


def test_unsatisfied_trace_step_raises():
    with pytest.raises(ReplayError) as err:
        extract_tpg(_problem(["B"], premises=("S(X)",)), ["B"], CHAIN_LIBRARY)
    assert err.value.step == 1


def test_extraction_matches_replay_oracle_on_generated_problems():
    library, problems, _, _ = small_synthetic()
    checked = 0
    for p in problems:
        if len(p.trace) >= 5:
            got = set(extract_tpg(p, p.trace, library).edges)
            assert got == replay_edges(p, p.trace, library), p.id
            checked += 1
    assert checked >= 10


def test_fusion_weights():
    a = PrecedenceGraph(["A", "B"], {("A", "B"): 1})
    b = PrecedenceGraph(["A", "C"], {("A", "C"): 1})
    fused = fuse_graphs([a, a, b, b], 4)
    assert fused.weight("A", "B") == Fraction(1, 2)
    assert fuse_graphs([a, a], 2).weight("A", "B") == 1


def test_identical_fusion_is_idempotent():
    g = PrecedenceGraph(["A", "B", "C"], {(START, "A"): 1, ("A", "B"): 1, ("B", "C"): 1})
    fused = fuse_graphs([g] * 5, 5)
    assert fused == g
    assert set(fused.weights().values()) == {1}


def test_fusion_matches_counting_oracle():
    rng = random.Random(5)
    nodes = [START, "A", "B", "C", "D", "E"]
    for _ in range(200):
        k = rng.randint(1, 8)
        sets = [random_edge_set(rng, nodes, rng.random()) for _ in range(k)]
        fused = fuse_graphs([PrecedenceGraph([], {e: 1 for e in es}) for es in sets], k)
        assert fused.weights() == fused_weights(sets, k)


def test_fusion_rejects_bad_k():
    g = PrecedenceGraph([], {})
    with pytest.raises(ValueError):
        fuse_graphs([g], 2)
    with pytest.raises(ValueError):
        fuse_graphs([], 0)


def test_graph_invariants():
    with pytest.raises(ValueError):
        PrecedenceGraph([], {("A", "A"): 1})
    with pytest.raises(ValueError):
        PrecedenceGraph([], {("A", START): 1})
    with pytest.raises(ValueError):
        PrecedenceGraph([], {("A", "B"): 3}, k=2)


@pytest.fixture
def chain():
    return PrecedenceGraph([], {(START, "A"): 1, ("A", "B"): 1, ("B", "C"): 1})


def test_descendants_on_chain(chain):
    assert descendants(chain, "A") == {"B", "C"}
    assert descendants(chain, "C") == set()
    with pytest.raises(KeyError):
        descendants(chain, "Z")


def test_descendants_match_closure_oracle():
    rng = random.Random(3)
    nodes = [START] + [f"n{i:02d}" for i in range(49)]
    for _ in range(5):
        graphs = [PrecedenceGraph(nodes, {e: 1 for e in random_edge_set(rng, nodes, 0.02)}) for _ in range(4)]
        fused = fuse_graphs(graphs, 4)
        reach = closure(fused.nodes, set(fused.support))
        for n in fused.nodes:
            assert descendants(fused, n) == reach[n]


def test_two_hop_keeps_best_product():
    g = PrecedenceGraph([], {("A", "B"): 1, ("A", "C"): 2, ("B", "D"): 2, ("C", "D"): 1}, k=2)
    # via B: 1/2 * 1, via C: 1 * 1/2
    assert g.two_hop("A") == {"D": Fraction(1, 2)}


def test_record_roundtrip(chain):
    fused = fuse_graphs([chain, PrecedenceGraph([], {("A", "C"): 1})], 2)
    assert PrecedenceGraph.from_record(fused.to_record()) == fused


def test_dot_empty_graph():
    assert export_dot(PrecedenceGraph([], {}), "g") == 'digraph "g" {\n}\n'


def test_dot_label_and_determinism():
    g = fuse_graphs([PrecedenceGraph([], {("A", "B"): 1}), PrecedenceGraph(["A", "B"], {})], 2)
    text = export_dot(g)
    assert 'label="0.500"' in text
    assert text == export_dot(g)
