"""Per-step candidate pruning, graph localisation, composite scoring and ranking."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .engine import START, TheoremLibrary, type_consistent
from .formal import Goal, MeasureGoal, SymbolicState
from .tpg import PrecedenceGraph, descendants

READY = "ready"
BLOCKED = "blocked"

GOAL_CATEGORIES = ("angular", "metric", "areal", "other")

# keyword table version 1; matched case-insensitively as substrings
DEFAULT_KEYWORDS: dict[str, tuple[str, ...]] = {
    "angular": ("angle", "parallel", "perpendicular"),
    "metric": ("length", "pythagorean", "similar"),
    "areal": ("area", "ratio"),
}
KEYWORD_TABLE_VERSION = 1

_ZERO = Fraction(0)
_HALF = Fraction(1, 2)


@dataclass(frozen=True)
class ScoreWeights:
    alpha: Fraction = Fraction(5)
    beta: Fraction = Fraction(10)
    gamma: Fraction = Fraction(5)
    second_order: Fraction = Fraction(4)
    recovery_penalty: Fraction = Fraction(20)

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "ScoreWeights":
        return cls(**{k: Fraction(str(v)) for k, v in doc.items()})

    def to_mapping(self) -> dict[str, str]:
        return {k: str(getattr(self, k)) for k in self.__dataclass_fields__}


def goal_category(goal: Goal, keywords: Mapping[str, Sequence[str]] = DEFAULT_KEYWORDS) -> str:
    label = goal.kind if isinstance(goal, MeasureGoal) else goal.fact.name
    label = label.lower()
    for cat, words in keywords.items():
        if any(w in label for w in words):
            return cat
    return "other"


@dataclass
class StepContext:
    """Loop state visible to the scorer.

    ``previous`` is the last theorem that applied, or START while none has
    (which may outlast step 1 when early steps exhaust their recoveries).
    """

    step: int
    previous: str = START
    counts: Mapping[str, int] = field(default_factory=dict)
    recovery: bool = False
    failed: frozenset[str] = frozenset()
    category: str = "other"

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.step == 1 and self.previous != START:
            raise ValueError("step 1 must follow START")
        if self.recovery and not self.failed:
            raise ValueError("recovery mode requires a nonempty failed set")


@dataclass(frozen=True)
class ScoredCandidate:
    name: str
    readiness: str | None
    s_goal: Fraction
    s_graph: Fraction
    s_hist: Fraction
    total: Fraction
    pool_frequency: int = 0


def prune_candidates(
    pool: Iterable[str], state: SymbolicState, library: TheoremLibrary
) -> tuple[list[str], list[str]]:
    """Split ``pool`` (order kept) into type-consistent and blocked theorems."""
    ready, blocked = [], []
    for name in pool:
        schema = library[name]
        (ready if type_consistent(schema, state) else blocked).append(name)
    return ready, blocked


def localize_graph(graph: PrecedenceGraph, previous: str | None) -> PrecedenceGraph:
    """Induced subgraph on ``previous`` and its descendants (START if off-graph)."""
    anchor = previous if previous is not None and previous in graph.nodes else START
    if anchor not in graph.nodes:
        return graph.subgraph(())
    return graph.subgraph(descendants(graph, anchor) | {anchor})


def graph_anchor(graph: PrecedenceGraph, previous: str) -> str:
    return previous if previous in graph.nodes else START


def score(
    candidate: str,
    ctx: StepContext,
    graph: PrecedenceGraph | None,
    pool_frequency: int = 0,
    *,
    readiness: str | None = None,
    weights: ScoreWeights = ScoreWeights(),
    keywords: Mapping[str, Sequence[str]] = DEFAULT_KEYWORDS,
) -> ScoredCandidate:
    lowered = candidate.lower()
    s_goal = _ZERO
    if ctx.category in keywords and any(w in lowered for w in keywords[ctx.category]):
        s_goal = weights.alpha

    s_graph = _ZERO
    if graph is not None:
        anchor = graph_anchor(graph, ctx.previous)
        w = graph.successors(anchor).get(candidate)
        if w is not None:
            s_graph = weights.beta * (_HALF + w)
        w2 = graph.two_hop(anchor).get(candidate)
        if w2 is not None:
            s_graph = max(s_graph, weights.second_order * (_HALF + w2))

    s_hist = _ZERO
    n = ctx.counts.get(candidate, 0)
    if n:
        s_hist = weights.gamma * n
    if ctx.recovery and candidate in ctx.failed:
        s_hist = s_hist + weights.recovery_penalty

    # most candidates score only on the keyword term; skip the rational arithmetic
    total = s_goal if s_graph is _ZERO and s_hist is _ZERO else s_goal + s_graph - s_hist
    return ScoredCandidate(
        name=candidate,
        readiness=readiness,
        s_goal=s_goal,
        s_graph=s_graph,
        s_hist=s_hist,
        total=total,
        pool_frequency=pool_frequency,
    )


def rank(candidates: Iterable[ScoredCandidate], window: int | None) -> list[ScoredCandidate]:
    """Order by score (desc), ready before blocked, then name; keep the first ``window``."""
    if window is not None and window < 1:
        raise ValueError("window must be >= 1")
    ordered = sorted(candidates, key=lambda c: (c.readiness == BLOCKED, c.name))
    # stable second pass on the score alone keeps the tie order above
    ordered.sort(key=lambda c: c.total, reverse=True)
    return ordered if window is None else ordered[:window]
