"""Deterministic synthetic theorem libraries and solvable problems with traces.

The library is split into topic clusters, each a stack of layers.  Every
theorem concludes a predicate that no other theorem concludes, and a
layer-``k`` theorem consumes predicates from layers below ``k`` (layer 1
consumes base predicates).  A problem of depth ``d`` is built from ``d``
theorems forming a dependency tree under a root theorem; its initial facts
hold exactly what the tree needs from outside, plus distractors that never
use a predicate concluded inside the tree.  Since each tree theorem is the
only source of a predicate some other tree theorem needs, every solving
sequence applies all ``d`` of them.
"""

from __future__ import annotations

import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .engine import (
    Applied,
    TheoremLibrary,
    TheoremSchema,
    apply_theorem,
)
from .formal import Predicate, PredicateGoal, Problem, goal_satisfied

log = logging.getLogger(__name__)

DEFAULT_BUCKETS: tuple[tuple[int, int], ...] = ((1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12))

KEYWORDS = (
    "angle",
    "parallel",
    "perpendicular",
    "length",
    "pythagorean",
    "similar",
    "area",
    "ratio",
    "midpoint",
    "circle",
    "tangent",
    "bisector",
)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int = 0
    library_size: int = 300
    layers: int = 6
    clusters: int = 10
    base_per_cluster: int = 4
    problems_per_bucket: int = 100
    buckets: tuple[tuple[int, int], ...] = DEFAULT_BUCKETS
    distractor_factor: float = 3.0
    entities: int = 12
    cross_cluster: float = 0.1
    two_premise: float = 0.8

    def __post_init__(self) -> None:
        if self.layers < 2:
            raise ValueError("layers must be >= 2")
        if self.library_size < self.clusters * self.layers:
            raise ValueError("library too small for clusters x layers")
        if not 2 <= self.entities <= 26:
            raise ValueError("entities must be in [2, 26]")
        if self.problems_per_bucket < 0:
            raise ValueError("problems_per_bucket must be >= 0")
        object.__setattr__(self, "buckets", tuple(tuple(b) for b in self.buckets))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["buckets"] = [list(b) for b in self.buckets]
        return d


@dataclass
class GeneratedCorpus:
    library: TheoremLibrary
    problems: list[Problem]
    manifest: dict = field(default_factory=dict)


def _cluster_tag(c: int) -> str:
    return f"c{c:02d}"


def gen_library(spec: GeneratorSpec) -> TheoremLibrary:
    rng = random.Random(f"library:{spec.seed}")
    slots = [(c, k) for k in range(1, spec.layers + 1) for c in range(spec.clusters)]
    per_slot = {s: spec.library_size // len(slots) for s in slots}
    for s in slots[: spec.library_size % len(slots)]:
        per_slot[s] += 1

    bases = {
        c: [f"Rel{_cluster_tag(c).upper()}B{j}" for j in range(spec.base_per_cluster)]
        for c in range(spec.clusters)
    }
    # products[(c, k)] -> predicate names concluded by layer k of cluster c
    products: dict[tuple[int, int], list[str]] = {}
    schemas: list[TheoremSchema] = []
    for k in range(1, spec.layers + 1):
        for c in range(spec.clusters):
            made = []
            for i in range(per_slot[(c, k)]):
                kw = rng.choice(KEYWORDS)
                name = f"{kw}_{_cluster_tag(c)}_l{k}_{i:02d}"
                pred = f"{kw.capitalize()}{_cluster_tag(c).upper()}L{k}T{i:02d}"
                premises = _pick_premises(rng, spec, c, k, bases, products)
                schemas.append(_make_schema(rng, name, premises, pred))
                made.append(pred)
            products[(c, k)] = made
    manifest = {"generator": "tpgsolve.synth", "spec": spec.to_dict()}
    return TheoremLibrary(schemas, manifest)


def _pick_premises(rng, spec, c, k, bases, products) -> list[str]:
    def other_cluster() -> int:
        return rng.choice([x for x in range(spec.clusters) if x != c]) if spec.clusters > 1 else c

    if k == 1:
        first = rng.choice(bases[c])
    else:
        first = rng.choice(products[(c, k - 1)])
    names = [first]
    if rng.random() < spec.two_premise:
        src = other_cluster() if rng.random() < spec.cross_cluster else c
        pool = list(bases[src])
        for j in range(1, k):
            pool.extend(products[(src, j)])
        second = rng.choice(pool)
        names.append(second)
    return names


def _make_schema(rng, name: str, premises: list[str], conclusion: str) -> TheoremSchema:
    if len(premises) == 1:
        (p,) = premises
        pats = [Predicate(p, ("?a", "?b"))]
        concl = Predicate(conclusion, ("?b", "?a") if rng.random() < 0.5 else ("?a", "?b"))
    else:
        p, q = premises
        shape = rng.randrange(3)
        if shape == 0:
            pats = [Predicate(p, ("?a", "?b")), Predicate(q, ("?b", "?c"))]
            concl = Predicate(conclusion, ("?a", "?c"))
        elif shape == 1:
            pats = [Predicate(p, ("?a", "?b")), Predicate(q, ("?a", "?b"))]
            concl = Predicate(conclusion, ("?b", "?a"))
        else:
            pats = [Predicate(p, ("?a", "?b")), Predicate(q, ("?b", "?c"))]
            concl = Predicate(conclusion, ("?c", "?a"))
    return TheoremSchema(name=name, premises=tuple(pats), conclusions=(concl,))


# -- problems ------------------------------------------------------------------


class _LibraryView:
    """Producer map and dependency closures derived from a library."""

    def __init__(self, library: TheoremLibrary):
        self.library = library
        self.producers: dict[str, list[str]] = {}
        for s in library:
            for c in s.conclusion_names:
                self.producers.setdefault(c, []).append(s.name)
        self.parents: dict[str, list[str]] = {}
        for s in library:
            ps = sorted({q for n in s.premise_names for q in self.producers.get(n, []) if q != s.name})
            self.parents[s.name] = ps
        self._closure: dict[str, frozenset[str]] = {}

    def ancestors(self, name: str) -> frozenset[str]:
        cached = self._closure.get(name)
        if cached is not None:
            return cached
        out: set[str] = set()
        stack = list(self.parents[name])
        while stack:
            q = stack.pop()
            if q in out or q == name:
                continue
            out.add(q)
            stack.extend(self.parents[q])
        self._closure[name] = frozenset(out)
        return self._closure[name]


def _tokens(n: int) -> list[str]:
    return [chr(ord("A") + i) for i in range(n)]


def _topo_order(rng: random.Random, chain: set[str], view: _LibraryView) -> list[str]:
    deps = {t: {q for q in view.parents[t] if q in chain} for t in chain}
    order: list[str] = []
    done: set[str] = set()
    while len(order) < len(chain):
        ready = sorted(t for t in chain if t not in done and deps[t] <= done)
        if not ready:
            raise GenerationError("cyclic dependencies among chosen theorems")
        pick = rng.choice(ready)
        order.append(pick)
        done.add(pick)
    return order


def _ground(
    rng: random.Random,
    view: _LibraryView,
    chain: set[str],
    theorem: str,
    target: Predicate,
    tokens: list[str],
    initial: dict[Predicate, None],
    seen: set[tuple[str, Predicate]],
) -> None:
    key = (theorem, target)
    if key in seen:
        return
    seen.add(key)
    schema = view.library[theorem]
    concl = schema.conclusions[0]
    binding = dict(zip(concl.args, target.args))
    for v in schema.variables:
        if v not in binding:
            used = set(binding.values())
            free = [t for t in tokens if t not in used] or tokens
            binding[v] = rng.choice(free)
    for pat in schema.premises:
        fact = Predicate(pat.name, tuple(binding[a] for a in pat.args))
        producer = next((q for q in view.producers.get(pat.name, []) if q in chain), None)
        if producer is None:
            initial.setdefault(fact, None)
        else:
            _ground(rng, view, chain, producer, fact, tokens, initial, seen)


def gen_problem(
    seed,
    library: TheoremLibrary,
    depth: int,
    *,
    problem_id: str | None = None,
    distractor_factor: float = 3.0,
    entities: int = 12,
    max_attempts: int = 200,
    _view: _LibraryView | None = None,
) -> Problem:
    """Sample a solvable problem whose ground-truth trace has ``depth`` theorems."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rng = random.Random(f"problem:{seed}")
    view = _view or _LibraryView(library)
    roots = sorted(n for n in library.names if len(view.ancestors(n)) + 1 >= depth)
    if not roots:
        raise GenerationError(f"no theorem has a dependency tree of {depth} theorems")
    tokens = _tokens(entities)
    for attempt in range(max_attempts):
        root = rng.choice(roots)
        chain = {root}
        while len(chain) < depth:
            options = sorted({q for t in chain for q in view.parents[t] if q not in chain})
            if not options:
                break
            chain.add(rng.choice(options))
        if len(chain) != depth:
            continue
        try:
            order = _topo_order(rng, chain, view)
        except GenerationError:
            continue
        schema = library[root]
        if len(schema.conclusions) != 1:
            continue
        goal_args = rng.sample(tokens, len(schema.conclusions[0].args))
        goal_fact = Predicate(schema.conclusions[0].name, tuple(goal_args))
        initial: dict[Predicate, None] = {}
        _ground(rng, view, chain, root, goal_fact, tokens, initial, set())
        premises = list(initial)
        premises += _distractors(rng, library, view, chain, len(premises), distractor_factor, tokens, initial)
        pid = problem_id or f"p{seed}"
        problem = Problem(
            id=pid,
            text=_render_text(premises, goal_fact),
            premises=tuple(premises),
            goal=PredicateGoal(goal_fact),
            trace=tuple(order),
        )
        if _replays(problem, library):
            return problem
        log.debug("attempt %d for %s did not replay; resampling", attempt, pid)
    raise GenerationError(f"could not build a depth-{depth} problem in {max_attempts} attempts")


def _distractors(rng, library, view, chain, n_chain, factor, tokens, initial) -> list[Predicate]:
    forbidden = {c for t in chain for c in library[t].conclusion_names}
    names = sorted(
        {p.name for s in library for p in s.premises if p.name not in forbidden}
        | {c for s in library if s.name not in chain for c in s.conclusion_names if c not in forbidden}
    )
    # bias towards predicates the tree already touches so distractor theorems fire nearby
    local = sorted({f.name for f in initial} - forbidden)
    want = int(round(factor * n_chain))
    out: dict[Predicate, None] = {}
    guard = 0
    while len(out) < want and guard < want * 20:
        guard += 1
        name = rng.choice(local) if local and rng.random() < 0.5 else rng.choice(names)
        fact = Predicate(name, tuple(rng.sample(tokens, 2)))
        if fact not in initial:
            out.setdefault(fact, None)
    return list(out)


def _render_text(premises: Sequence[Predicate], goal: Predicate) -> str:
    return f"Given {'; '.join(str(p) for p in premises)}. Prove {goal}."


def _replays(problem: Problem, library: TheoremLibrary) -> bool:
    state = problem.initial_state()
    if goal_satisfied(state, problem.goal):
        return False
    assert problem.trace is not None
    for t, name in enumerate(problem.trace, start=1):
        state, outcome = apply_theorem(state, library[name], t)
        if not isinstance(outcome, Applied):
            return False
        reached = goal_satisfied(state, problem.goal)
        if reached != (t == len(problem.trace)):
            return False
    return True


def bucket_depths(spec: GeneratorSpec, rng: random.Random) -> list[int]:
    depths = []
    for lo, hi in spec.buckets:
        depths.extend(rng.randint(lo, hi) for _ in range(spec.problems_per_bucket))
    return depths


def gen_problems(spec: GeneratorSpec, library: TheoremLibrary, split: str = "train") -> list[Problem]:
    from .harness import stratify

    rng = random.Random(f"depths:{spec.seed}:{split}")
    depths = bucket_depths(spec, rng)
    view = _LibraryView(library)
    problems = []
    for i, d in enumerate(depths):
        pid = f"{split}-{i:04d}"
        p = gen_problem(
            f"{spec.seed}:{split}:{i}",
            library,
            d,
            problem_id=pid,
            distractor_factor=spec.distractor_factor,
            entities=spec.entities,
            _view=view,
        )
        problems.append(
            Problem(
                id=p.id,
                text=p.text,
                premises=p.premises,
                goal=p.goal,
                trace=p.trace,
                level=stratify(d),
            )
        )
    return problems


def gen_corpus(spec: GeneratorSpec, split: str = "train") -> GeneratedCorpus:
    library = gen_library(spec)
    problems = gen_problems(spec, library, split)
    manifest = {
        "generator": "tpgsolve.synth",
        "split": split,
        "spec": spec.to_dict(),
        "library_digest": library.digest(),
    }
    return GeneratedCorpus(library, problems, manifest)
