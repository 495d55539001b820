"""Independent brute-force reference implementations used as test oracles.

Nothing here calls into the search, replay or graph code under test; the
oracles only share the plain data types (predicates, schemas, problems).
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from tpgsolve.formal import MeasureBinding, Predicate

START = "START"


def state_tokens(facts) -> list[str]:
    toks = set()
    for f in facts:
        if isinstance(f, MeasureBinding):
            toks.add(f.subject)
        else:
            toks.update(f.args)
    return sorted(toks)


def brute_bindings(schema, facts) -> list[dict[str, str]]:
    """Every total assignment of schema variables to state tokens satisfying all premises."""
    facts = set(facts)
    measures = {(m.kind, m.subject) for m in facts if isinstance(m, MeasureBinding)}
    variables = list(schema.variables)
    out = []
    for combo in itertools.product(state_tokens(facts), repeat=len(variables)):
        b = dict(zip(variables, combo))
        ok = all(
            Predicate(p.name, tuple(b.get(a, a) if a.startswith("?") else a for a in p.args)) in facts
            for p in schema.premises
        )
        ok = ok and all(
            (mp.kind, b.get(mp.subject, mp.subject)) in measures for mp in schema.measure_premises
        )
        if ok:
            out.append(b)
    out.sort(key=lambda b: tuple(b[v] for v in variables))
    return out


def _ground(pattern: Predicate, b: dict[str, str]) -> Predicate:
    return Predicate(pattern.name, tuple(b.get(a, a) for a in pattern.args))


def replay_edges(problem, trace, library) -> set[tuple[str, str]]:
    """Provenance edges by explicit birth-index bookkeeping (predicate facts only)."""
    birth = {f: 0 for f in problem.premises}
    edges = set()
    for step, name in enumerate(trace, start=1):
        schema = library[name]
        assert not schema.measure_premises and not schema.measure_rules, "oracle handles predicates only"
        before = set(birth)
        produced = {}
        for b in brute_bindings(schema, before):
            new = [_ground(c, b) for c in schema.conclusions if _ground(c, b) not in before]
            if not new:
                continue
            for pat in schema.premises:
                born = birth[_ground(pat, b)]
                src = START if born == 0 else trace[born - 1]
                if src != name:
                    edges.add((src, name))
            for f in new:
                produced.setdefault(f, step)
        for f, s in produced.items():
            birth.setdefault(f, s)
    return edges


def closure(nodes, edges) -> dict[str, set[str]]:
    """Floyd-Warshall reachability (paths of length >= 1)."""
    nodes = sorted(nodes)
    reach = {u: {v: (u, v) in edges for v in nodes} for u in nodes}
    for k in nodes:
        for i in nodes:
            if reach[i][k]:
                for j in nodes:
                    if reach[k][j]:
                        reach[i][j] = True
    return {u: {v for v in nodes if reach[u][v]} for u in nodes}


def cosine_order(vectors: dict[str, list[float]], query: list[float]) -> list[str]:
    def cos(a, b):
        na = math.sqrt(math.fsum(x * x for x in a))
        nb = math.sqrt(math.fsum(x * x for x in b))
        if na == 0 or nb == 0:
            return 0.0
        return math.fsum(x * y for x, y in zip(a, b)) / (na * nb)

    sims = {i: cos(v, query) for i, v in vectors.items()}
    return sorted(vectors, key=lambda i: (-sims[i], i))


def fused_weights(edge_sets, k) -> dict[tuple[str, str], Fraction]:
    counts: dict[tuple[str, str], int] = {}
    for es in edge_sets:
        for e in set(es):
            counts[e] = counts.get(e, 0) + 1
    return {e: Fraction(n, k) for e, n in counts.items()}


def saturate(facts, schemas, limit: int = 10_000) -> set:
    """Apply every schema on every binding until nothing new appears."""
    known = set(facts)
    for _ in range(limit):
        new = set()
        for s in schemas:
            for b in brute_bindings(s, known):
                new.update(_ground(c, b) for c in s.conclusions)
        if new <= known:
            return known
        known |= new
    raise RuntimeError("saturation did not converge")
