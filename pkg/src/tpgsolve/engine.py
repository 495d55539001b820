"""Theorem schemas, premise unification and the saturating symbolic executor."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Iterator, Union

from .formal import (
    Fact,
    FormalSyntaxError,
    MeasureBinding,
    MeasureConflict,
    Predicate,
    SymbolicState,
    parse_predicate,
    parse_rational,
)

START = "START"


class LibraryError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurePremise:
    """Requires a measure ``kind[subject]`` and names its value ``var``."""

    kind: str
    subject: str
    var: str


@dataclass(frozen=True)
class MeasureRule:
    """Derives ``kind[subject] = const + sum(coeff * value_var)``."""

    kind: str
    subject: str
    const: Fraction
    coeffs: tuple[tuple[str, Fraction], ...]

    def evaluate(self, values: dict[str, Fraction]) -> Fraction:
        total = self.const
        for var, c in self.coeffs:
            total += c * values[var]
        return total

    def render_expr(self) -> str:
        parts = [str(self.const)] if self.const or not self.coeffs else []
        for var, c in self.coeffs:
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            term = var if mag == 1 else f"{mag}*{var}"
            if not parts:
                parts.append(term if sign == "+" else f"-{term}")
            else:
                parts.append(f"{sign} {term}")
        return " ".join(parts)


_TERM_RE = re.compile(
    r"\s*([+-])?\s*(?:(\d+(?:\.\d+)?(?:/\d+)?)\s*(?:\*\s*([A-Za-z_]\w*))?|([A-Za-z_]\w*))\s*"
)


def parse_affine(expr: str) -> tuple[Fraction, tuple[tuple[str, Fraction], ...]]:
    """Parse ``180 - m1 - 2*m2`` into a constant and ordered coefficients."""
    pos = 0
    const = Fraction(0)
    coeffs: dict[str, Fraction] = {}
    first = True
    while pos < len(expr):
        m = _TERM_RE.match(expr, pos)
        if not m or m.end() == pos:
            raise LibraryError(f"bad affine expression {expr!r} at offset {pos}")
        sign, number, var_after, bare_var = m.groups()
        if sign is None and not first:
            raise LibraryError(f"missing operator in {expr!r} at offset {pos}")
        s = -1 if sign == "-" else 1
        if bare_var:
            coeffs[bare_var] = coeffs.get(bare_var, Fraction(0)) + s
        elif var_after:
            coeffs[var_after] = coeffs.get(var_after, Fraction(0)) + s * Fraction(number)
        else:
            const += s * Fraction(number)
        pos = m.end()
        first = False
    if first:
        raise LibraryError("empty affine expression")
    return const, tuple(sorted(coeffs.items()))


@dataclass(frozen=True)
class TheoremSchema:
    name: str
    premises: tuple[Predicate, ...]
    conclusions: tuple[Predicate, ...] = ()
    measure_premises: tuple[MeasurePremise, ...] = ()
    measure_rules: tuple[MeasureRule, ...] = ()
    variables: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.name:
            raise LibraryError("theorem name must be nonempty")
        if self.name == START:
            raise LibraryError(f"{START!r} is reserved")
        bound: list[str] = []
        for p in self.premises:
            for a in p.variables:
                if a not in bound:
                    bound.append(a)
        for mp in self.measure_premises:
            if mp.subject.startswith("?") and mp.subject not in bound:
                bound.append(mp.subject)
        if not self.variables:
            object.__setattr__(self, "variables", tuple(bound))
        elif set(self.variables) != set(bound):
            raise LibraryError(f"{self.name}: declared variables {self.variables} != premise variables")
        for c in self.conclusions:
            missing = [v for v in c.variables if v not in bound]
            if missing:
                raise LibraryError(f"{self.name}: conclusion variable(s) {missing} not bound by premises")
        value_vars = {mp.var for mp in self.measure_premises}
        if len(value_vars) != len(self.measure_premises):
            raise LibraryError(f"{self.name}: duplicate measure value names")
        for r in self.measure_rules:
            if r.subject.startswith("?") and r.subject not in bound:
                raise LibraryError(f"{self.name}: measure rule subject {r.subject} unbound")
            for var, _ in r.coeffs:
                if var not in value_vars:
                    raise LibraryError(f"{self.name}: measure rule uses unknown value {var!r}")
        if not self.conclusions and not self.measure_rules:
            raise LibraryError(f"{self.name}: theorem has no conclusions")

    @property
    def premise_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.premises)

    @property
    def conclusion_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.conclusions)


class TheoremLibrary:
    """Ordered, name-unique collection of theorem schemas."""

    def __init__(self, schemas: Iterable[TheoremSchema], manifest: dict | None = None):
        self.schemas: tuple[TheoremSchema, ...] = tuple(schemas)
        self.manifest = manifest or {}
        self._by_name: dict[str, TheoremSchema] = {}
        for s in self.schemas:
            if s.name in self._by_name:
                raise LibraryError(f"duplicate theorem name {s.name!r}")
            self._by_name[s.name] = s

    def __len__(self) -> int:
        return len(self.schemas)

    def __iter__(self) -> Iterator[TheoremSchema]:
        return iter(self.schemas)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> TheoremSchema:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown theorem {name!r}") from None

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.schemas]

    def digest(self) -> str:
        blob = json.dumps(dump_library(self, include_manifest=False), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- binding enumeration -------------------------------------------------------

Binding = dict


def _unify(pattern: Predicate, fact: Predicate, binding: dict[str, str]) -> dict[str, str] | None:
    if len(pattern.args) != len(fact.args):
        return None
    out = binding
    copied = False
    for p, f in zip(pattern.args, fact.args):
        if p.startswith("?"):
            cur = out.get(p)
            if cur is None:
                if not copied:
                    out = dict(out)
                    copied = True
                out[p] = f
            elif cur != f:
                return None
        elif p != f:
            return None
    return out


def _substitute(pattern: Predicate, binding: dict[str, str]) -> Predicate:
    return Predicate(pattern.name, tuple(binding.get(a, a) if a.startswith("?") else a for a in pattern.args))


def _subject(token: str, binding: dict[str, str]) -> str:
    return binding.get(token, token) if token.startswith("?") else token


def _search(schema: TheoremSchema, state: SymbolicState) -> list[tuple[dict[str, str], tuple[Fact, ...], dict[str, Fraction]]]:
    results = []

    def measure_step(i: int, binding: dict[str, str], used: list, values: dict[str, Fraction]) -> None:
        if i == len(schema.measure_premises):
            results.append((binding, tuple(used), dict(values)))
            return
        mp = schema.measure_premises[i]
        if mp.subject.startswith("?") and mp.subject in binding:
            m = state.measures.get((mp.kind, binding[mp.subject]))
            candidates = [m] if m is not None else []
        elif not mp.subject.startswith("?"):
            m = state.measures.get((mp.kind, mp.subject))
            candidates = [m] if m is not None else []
        else:
            candidates = state.measures_of(mp.kind)
        for m in candidates:
            b = binding
            if mp.subject.startswith("?") and mp.subject not in binding:
                b = dict(binding)
                b[mp.subject] = m.subject
            values[mp.var] = m.value
            used.append(m)
            measure_step(i + 1, b, used, values)
            used.pop()
            del values[mp.var]

    def fact_step(i: int, binding: dict[str, str], used: list) -> None:
        if i == len(schema.premises):
            measure_step(0, binding, used, {})
            return
        pat = schema.premises[i]
        for fact in state.facts_named(pat.name):
            b = _unify(pat, fact, binding)
            if b is not None:
                used.append(fact)
                fact_step(i + 1, b, used)
                used.pop()

    fact_step(0, {}, [])
    # a total binding fixes every premise instance, so the token tuple is a key
    unique: dict[tuple[str, ...], tuple] = {}
    for binding, used, values in results:
        key = tuple(binding[v] for v in schema.variables)
        unique.setdefault(key, (binding, used, values))
    return [unique[k] for k in sorted(unique)]


def enumerate_bindings(schema: TheoremSchema, state: SymbolicState) -> list[dict[str, str]]:
    """All total bindings satisfying every premise, ordered lexicographically by bound tokens."""
    return [b for b, _, _ in _search(schema, state)]


def type_consistent(schema: TheoremSchema, state: SymbolicState) -> bool:
    """Weak applicability: every premise predicate name and measure kind occurs in ``state``."""
    return all(state.has_name(p.name) for p in schema.premises) and all(
        state.has_kind(mp.kind) for mp in schema.measure_premises
    )


# -- application ---------------------------------------------------------------


@dataclass(frozen=True)
class FiredBinding:
    binding: tuple[tuple[str, str], ...]
    premises: tuple[Fact, ...]
    # conclusions of this binding that were absent before the step
    produced: tuple[Fact, ...]


@dataclass(frozen=True)
class Applied:
    new_facts: tuple[Predicate, ...]
    new_measures: tuple[MeasureBinding, ...]
    fired: tuple[FiredBinding, ...]

    @property
    def consumed(self) -> tuple[Fact, ...]:
        """Premise instances of the bindings that contributed something new."""
        seen: dict[Fact, None] = {}
        for fb in self.fired:
            if fb.produced:
                for p in fb.premises:
                    seen.setdefault(p, None)
        return tuple(seen)


@dataclass(frozen=True)
class NoNewFacts:
    fired: tuple[FiredBinding, ...] = ()


@dataclass(frozen=True)
class PremiseUnsatisfied:
    pass


ApplicationOutcome = Union[Applied, NoNewFacts, PremiseUnsatisfied]


def apply_theorem(state: SymbolicState, schema: TheoremSchema, step: int) -> tuple[SymbolicState, ApplicationOutcome]:
    """Fire every valid binding of ``schema`` on ``state`` (mutated in place).

    New facts are stamped with ``step``.  A measure conflict raises
    :class:`~tpgsolve.formal.MeasureConflict` before anything is added.
    """
    matches = _search(schema, state)
    if not matches:
        return state, PremiseUnsatisfied()

    pending_facts: dict[Predicate, None] = {}
    pending_measures: dict[tuple[str, str], MeasureBinding] = {}
    fired = []
    for binding, used, values in matches:
        produced: list[Fact] = []
        for c in schema.conclusions:
            fact = _substitute(c, binding)
            if fact not in state.facts:
                produced.append(fact)
                pending_facts.setdefault(fact, None)
        for rule in schema.measure_rules:
            m = MeasureBinding(rule.kind, _subject(rule.subject, binding), rule.evaluate(values))
            old = state.measures.get(m.key) or pending_measures.get(m.key)
            if old is not None and old.value != m.value:
                raise MeasureConflict(
                    f"{schema.name}: {m.kind}[{m.subject}] is {old.value}, derived {m.value}"
                )
            if m.key not in state.measures:
                produced.append(m)
                pending_measures.setdefault(m.key, m)
        fired.append(FiredBinding(tuple(sorted(binding.items())), used, tuple(produced)))

    if not pending_facts and not pending_measures:
        return state, NoNewFacts(tuple(fired))
    for f in pending_facts:
        state.add_fact(f, step)
    for m in pending_measures.values():
        state.add_measure(m, step)
    return state, Applied(tuple(pending_facts), tuple(pending_measures.values()), tuple(fired))


# -- library files -------------------------------------------------------------


def _parse_measure_premise(doc: dict, name: str) -> MeasurePremise:
    try:
        return MeasurePremise(str(doc["measure"]), str(doc["subject"]), str(doc["as"]))
    except KeyError as exc:
        raise LibraryError(f"{name}: measure premise missing {exc}") from None


def _parse_rule(doc: dict, name: str) -> MeasureRule:
    try:
        kind, subject, expr = str(doc["measure"]), str(doc["subject"]), doc["expr"]
    except KeyError as exc:
        raise LibraryError(f"{name}: measure_rule missing {exc}") from None
    if isinstance(expr, (int, float)):
        const, coeffs = parse_rational(expr), ()
    else:
        const, coeffs = parse_affine(str(expr))
    return MeasureRule(kind, subject, const, coeffs)


def schema_from_record(doc: dict) -> TheoremSchema:
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise LibraryError(f"theorem record without name: {doc!r}")
    premises, mpremises = [], []
    try:
        for item in doc.get("premises", []):
            if isinstance(item, dict):
                mpremises.append(_parse_measure_premise(item, name))
            else:
                premises.append(parse_predicate(item, allow_variables=True))
        conclusions = [parse_predicate(c, allow_variables=True) for c in doc.get("conclusions", [])]
    except FormalSyntaxError as exc:
        raise LibraryError(f"{name}: {exc}") from exc
    rules_doc = doc.get("measure_rule")
    if rules_doc is None:
        rules = []
    elif isinstance(rules_doc, list):
        rules = [_parse_rule(r, name) for r in rules_doc]
    else:
        rules = [_parse_rule(rules_doc, name)]
    return TheoremSchema(
        name=name,
        premises=tuple(premises),
        conclusions=tuple(conclusions),
        measure_premises=tuple(mpremises),
        measure_rules=tuple(rules),
    )


def schema_to_record(schema: TheoremSchema) -> dict:
    premises: list[Any] = [str(p) for p in schema.premises]
    premises += [{"measure": m.kind, "subject": m.subject, "as": m.var} for m in schema.measure_premises]
    doc: dict[str, Any] = {
        "name": schema.name,
        "premises": premises,
        "conclusions": [str(c) for c in schema.conclusions],
    }
    if schema.measure_rules:
        doc["measure_rule"] = [
            {"measure": r.kind, "subject": r.subject, "expr": r.render_expr()} for r in schema.measure_rules
        ]
    return doc


def load_library(path_or_doc) -> TheoremLibrary:
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        with open(path_or_doc, encoding="utf-8") as fh:
            doc = json.load(fh)
    if isinstance(doc, list):
        records, manifest = doc, {}
    else:
        records, manifest = doc.get("theorems"), doc.get("manifest", {})
    if not isinstance(records, list):
        raise LibraryError("library file must contain a 'theorems' list")
    return TheoremLibrary([schema_from_record(r) for r in records], manifest)


def dump_library(library: TheoremLibrary, include_manifest: bool = True) -> dict:
    doc: dict[str, Any] = {
        "format": "tpgsolve-library/1",
        "theorems": [schema_to_record(s) for s in library],
    }
    if include_manifest:
        doc["manifest"] = library.manifest
    return doc


def save_library(path, library: TheoremLibrary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dump_library(library), fh, indent=1, sort_keys=True)
        fh.write("\n")
