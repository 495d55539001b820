"""Theorem precedence graphs: extraction from solution traces, fusion, reachability."""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .engine import START, Applied, PremiseUnsatisfied, TheoremLibrary, apply_theorem
from .formal import Problem

__all__ = [
    "START",
    "PrecedenceGraph",
    "ReplayError",
    "extract_tpg",
    "fuse_graphs",
    "descendants",
    "export_dot",
]


class ReplayError(RuntimeError):
    def __init__(self, problem_id: str, step: int, theorem: str):
        super().__init__(f"{problem_id}: trace step {step} ({theorem}) has unsatisfied premises")
        self.problem_id = problem_id
        self.step = step
        self.theorem = theorem


class PrecedenceGraph:
    """Directed graph over theorem names plus ``START``.

    Edge weights are exact: ``support[(u, v)] / k``, where ``k`` is the number
    of graphs fused into this one (1 for a graph extracted from one trace).
    Instances are treated as immutable.
    """

    __slots__ = ("nodes", "support", "k", "_succ", "_two_hop")

    def __init__(
        self,
        nodes: Iterable[str],
        support: Mapping[tuple[str, str], int],
        k: int = 1,
        with_start: bool = True,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        nodes = set(nodes)
        if with_start:
            nodes.add(START)
        clean: dict[tuple[str, str], int] = {}
        for (u, v), n in support.items():
            if u == v:
                raise ValueError(f"self-loop on {u!r}")
            if v == START:
                raise ValueError("START cannot have in-edges")
            if not 0 < n <= k:
                raise ValueError(f"support {n} for {u}->{v} outside (0, {k}]")
            nodes.add(u)
            nodes.add(v)
            clean[(u, v)] = n
        self.nodes: frozenset[str] = frozenset(nodes)
        self.support: dict[tuple[str, str], int] = clean
        self.k = k
        succ: dict[str, dict[str, Fraction]] = {}
        for (u, v), n in clean.items():
            succ.setdefault(u, {})[v] = Fraction(n, k)
        self._succ = succ
        self._two_hop: dict[str, dict[str, Fraction]] = {}

    @property
    def edges(self) -> list[tuple[str, str]]:
        return sorted(self.support)

    def weight(self, u: str, v: str) -> Fraction | None:
        return self._succ.get(u, {}).get(v)

    def successors(self, u: str) -> dict[str, Fraction]:
        return self._succ.get(u, {})

    def two_hop(self, u: str) -> dict[str, Fraction]:
        """Best product ``w(u,m) * w(m,v)`` over intermediates ``m`` for each ``v``."""
        cached = self._two_hop.get(u)
        if cached is None:
            cached = {}
            for m, w1 in self._succ.get(u, {}).items():
                for v, w2 in self._succ.get(m, {}).items():
                    p = w1 * w2
                    if p > cached.get(v, -1):
                        cached[v] = p
            self._two_hop[u] = cached
        return cached

    def __contains__(self, node: object) -> bool:
        return node in self.nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrecedenceGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.weights() == other.weights()

    def __hash__(self) -> int:
        return hash((self.nodes, frozenset(self.weights().items())))

    def __repr__(self) -> str:
        return f"PrecedenceGraph({len(self.nodes)} nodes, {len(self.support)} edges, k={self.k})"

    def weights(self) -> dict[tuple[str, str], Fraction]:
        return {e: Fraction(n, self.k) for e, n in self.support.items()}

    def subgraph(self, keep: Iterable[str]) -> "PrecedenceGraph":
        """Induced subgraph on ``keep`` with weights (support and k) preserved."""
        keep = set(keep)
        support = {e: n for e, n in self.support.items() if e[0] in keep and e[1] in keep}
        return PrecedenceGraph(keep, support, self.k, with_start=START in keep)

    def to_record(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "edges": [[u, v, n, self.k] for (u, v), n in sorted(self.support.items())],
        }

    @classmethod
    def from_record(cls, doc: dict) -> "PrecedenceGraph":
        edges = doc.get("edges", [])
        ks = {int(e[3]) for e in edges}
        if len(ks) > 1:
            raise ValueError("inconsistent edge denominators")
        k = ks.pop() if ks else int(doc.get("k", 1))
        return cls(doc.get("nodes", []), {(u, v): int(n) for u, v, n, _ in edges}, k)


def extract_tpg(problem: Problem, trace: Sequence[str], library: TheoremLibrary) -> PrecedenceGraph:
    """Replay ``trace`` from the problem's initial state and record provenance edges.

    Every premise instance consumed at step ``t`` by a binding that produced
    something new yields an edge from the theorem that first derived it (or
    ``START`` for initial facts) to the theorem of step ``t``.
    """
    state = problem.initial_state()
    support: dict[tuple[str, str], int] = {}
    for t, name in enumerate(trace, start=1):
        state, outcome = apply_theorem(state, library[name], t)
        if isinstance(outcome, PremiseUnsatisfied):
            raise ReplayError(problem.id, t, name)
        if not isinstance(outcome, Applied):
            continue
        for fact in outcome.consumed:
            born = state.birth[fact]
            src = START if born == 0 else trace[born - 1]
            if src != name:
                support[(src, name)] = 1
    return PrecedenceGraph(trace, support, 1)


def fuse_graphs(graphs: Sequence[PrecedenceGraph], k: int) -> PrecedenceGraph:
    """Union of ``graphs``; each edge weighted by the fraction of graphs containing it."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(graphs) != k:
        raise ValueError(f"k={k} but {len(graphs)} graphs given")
    nodes: set[str] = set()
    support: dict[tuple[str, str], int] = {}
    for g in graphs:
        nodes |= g.nodes
        for e in g.support:
            support[e] = support.get(e, 0) + 1
    return PrecedenceGraph(nodes, support, k)


def descendants(graph: PrecedenceGraph, node: str) -> set[str]:
    """Nodes reachable from ``node`` by one or more edges."""
    if node not in graph.nodes:
        raise KeyError(f"unknown node {node!r}")
    seen: set[str] = set()
    queue = deque(graph.successors(node))
    while queue:
        v = queue.popleft()
        if v in seen:
            continue
        seen.add(v)
        queue.extend(w for w in graph.successors(v) if w not in seen)
    return seen


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: PrecedenceGraph, name: str = "tpg") -> str:
    lines = [f"digraph {_dot_id(name)} {{"]
    linked = {u for e in graph.support for u in e}
    for node in sorted(graph.nodes):
        if node == START:
            if node in linked:
                lines.append(f"  {_dot_id(node)} [shape=box];")
        else:
            lines.append(f"  {_dot_id(node)};")
    for (u, v), n in sorted(graph.support.items()):
        w = float(Fraction(n, graph.k))
        lines.append(f'  {_dot_id(u)} -> {_dot_id(v)} [label="{w:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
