import random
from fractions import Fraction

import pytest

from oracles import brute_bindings
from randgen import random_schema, random_state
from tpgsolve.engine import (
    START,
    Applied,
    LibraryError,
    NoNewFacts,
    PremiseUnsatisfied,
    TheoremLibrary,
    TheoremSchema,
    apply_theorem,
    dump_library,
    enumerate_bindings,
    load_library,
    parse_affine,
    save_library,
    type_consistent,
)
from tpgsolve.formal import MeasureBinding, MeasureConflict, Predicate, SymbolicState, parse_predicate


def P(text):
    return parse_predicate(text)


def _state(*texts):
    return SymbolicState.from_facts([P(t) for t in texts])


@pytest.fixture
def symmetry(geo_library):
    return geo_library["parallel_symmetry"]


def test_single_binding(symmetry):
    assert enumerate_bindings(symmetry, _state("Parallel(AB,CD)")) == [{"?x": "AB", "?y": "CD"}]


def test_no_binding_on_empty_state(symmetry):
    assert enumerate_bindings(symmetry, SymbolicState()) == []


def test_two_bindings_in_lexicographic_order(symmetry):
    state = _state("Parallel(EF,GH)", "Parallel(AB,CD)")
    got = enumerate_bindings(symmetry, state)
    assert got == [{"?x": "AB", "?y": "CD"}, {"?x": "EF", "?y": "GH"}]
    assert got == brute_bindings(symmetry, state.facts)


def test_bindings_match_brute_force_on_random_instances():
    rng = random.Random(11)
    for i in range(500):
        schema = random_schema(rng, f"t{i}")
        state = random_state(rng)
        assert enumerate_bindings(schema, state) == brute_bindings(schema, state.facts), (schema, state.facts)


def test_apply_symmetry_then_idempotent(symmetry):
    state = _state("Parallel(AB,CD)")
    state, out = apply_theorem(state, symmetry, 1)
    assert isinstance(out, Applied)
    assert out.new_facts == (P("Parallel(CD,AB)"),)
    assert state.birth[P("Parallel(CD,AB)")] == 1
    state, out = apply_theorem(state, symmetry, 2)
    assert isinstance(out, NoNewFacts)


def test_apply_on_empty_state(symmetry):
    _, out = apply_theorem(SymbolicState(), symmetry, 1)
    assert isinstance(out, PremiseUnsatisfied)


def test_saturating_application_fires_every_binding(geo_library):
    state = _state("Parallel(AB,CD)", "Parallel(CD,EF)", "Parallel(EF,GH)")
    state, out = apply_theorem(state, geo_library["parallel_transitivity"], 1)
    assert set(out.new_facts) == {P("Parallel(AB,EF)"), P("Parallel(CD,GH)")}
    # facts derived this step are not reused within the same step
    assert P("Parallel(AB,GH)") not in state


def test_consumed_only_from_productive_bindings(geo_library):
    state = _state("Parallel(AB,CD)", "Parallel(CD,AB)", "Parallel(EF,GH)")
    state, out = apply_theorem(state, geo_library["parallel_symmetry"], 1)
    assert out.new_facts == (P("Parallel(GH,EF)"),)
    assert set(out.consumed) == {P("Parallel(EF,GH)")}


def test_measure_rule(triangle_problem, geo_library):
    state = triangle_problem.initial_state()
    state, out = apply_theorem(state, geo_library["triangle_angle_sum"], 1)
    assert isinstance(out, Applied)
    assert state.measure("angle_c", "ABC") == Fraction(70)


def test_measure_conflict_leaves_state_untouched(geo_library):
    state = SymbolicState.from_facts(
        [
            P("Triangle(ABC)"),
            MeasureBinding("angle_a", "ABC", Fraction(50)),
            MeasureBinding("angle_b", "ABC", Fraction(60)),
            MeasureBinding("angle_c", "ABC", Fraction(80)),
        ]
    )
    before = set(state)
    with pytest.raises(MeasureConflict):
        apply_theorem(state, geo_library["triangle_angle_sum"], 1)
    assert set(state) == before


def test_type_consistency_is_name_presence():
    premises = (Predicate("Parallel", ("?x", "?y")), Predicate("Perpendicular", ("?y", "?z")))
    schema = TheoremSchema("mixed", premises, (Predicate("Out", ("?x",)),))
    assert not type_consistent(schema, _state("Parallel(AB,CD)"))
    # names present but no joint unifier
    state = _state("Parallel(AB,CD)", "Perpendicular(EF,GH)")
    assert type_consistent(schema, state)
    assert enumerate_bindings(schema, state) == []


def test_schema_validation():
    with pytest.raises(LibraryError):
        TheoremSchema(START, (Predicate("P", ("?x",)),), (Predicate("Q", ("?x",)),))
    with pytest.raises(LibraryError):
        TheoremSchema("t", (Predicate("P", ("?x",)),), (Predicate("Q", ("?y",)),))
    with pytest.raises(LibraryError):
        TheoremLibrary([TheoremSchema("t", (Predicate("P", ("?x",)),), (Predicate("Q", ("?x",)),))] * 2)


def test_parse_affine():
    assert parse_affine("180 - m1 - 2*m2") == (Fraction(180), (("m1", Fraction(-1)), ("m2", Fraction(-2))))
    with pytest.raises(LibraryError):
        parse_affine("180 m1")


def test_library_roundtrip(tmp_path, geo_library):
    path = tmp_path / "lib.json"
    save_library(path, geo_library)
    again = load_library(path)
    assert dump_library(again) == dump_library(geo_library)
    assert again.digest() == geo_library.digest()
