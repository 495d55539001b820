"""Minimal formal predicate language: predicates, measures, states, goals, problems."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Iterator, Union

__all__ = [
    "FormalSyntaxError",
    "ProblemFormatError",
    "MeasureConflict",
    "Predicate",
    "MeasureBinding",
    "SymbolicState",
    "PredicateGoal",
    "MeasureGoal",
    "Goal",
    "Problem",
    "parse_predicate",
    "parse_rational",
    "goal_satisfied",
    "load_problem",
    "dump_problem",
    "load_corpus",
    "save_corpus",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TOKEN_RE = re.compile(r"\??[A-Za-z0-9_]+")


class FormalSyntaxError(ValueError):
    """Raised when predicate text does not match ``Name(arg,...)``."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset}: {text!r}")
        self.text = text
        self.offset = offset


class ProblemFormatError(ValueError):
    pass


class MeasureConflict(ValueError):
    """A measure was re-derived with a different value."""


@dataclass(frozen=True, order=True)
class Predicate:
    name: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(a for a in self.args if a.startswith("?"))

    def is_ground(self) -> bool:
        return not self.variables


@dataclass(frozen=True, order=True)
class MeasureBinding:
    kind: str
    subject: str
    value: Fraction

    def __str__(self) -> str:
        return f"{self.kind}[{self.subject}]={self.value}"

    @property
    def key(self) -> tuple[str, str]:
        return (self.kind, self.subject)


Fact = Union[Predicate, MeasureBinding]


def parse_predicate(text: str, allow_variables: bool = False) -> Predicate:
    """Parse ``Name(a,b,...)``.

    With ``allow_variables`` the arguments may be ``?var`` pattern variables.
    Errors carry the offset of the offending character.
    """
    s = text.strip()
    base = len(text) - len(text.lstrip())
    m = _NAME_RE.match(s)
    if not m:
        raise FormalSyntaxError("expected predicate name", text, base)
    pos = m.end()
    if pos >= len(s) or s[pos] != "(":
        raise FormalSyntaxError("expected '('", text, base + pos)
    pos += 1
    args: list[str] = []
    while True:
        while pos < len(s) and s[pos] == " ":
            pos += 1
        tm = _TOKEN_RE.match(s, pos)
        if not tm:
            if pos < len(s) and s[pos] in ",)":
                raise FormalSyntaxError("empty argument", text, base + pos)
            raise FormalSyntaxError("expected argument", text, base + pos)
        tok = tm.group(0)
        if tok.startswith("?"):
            if not allow_variables:
                raise FormalSyntaxError("variable not allowed in ground predicate", text, base + pos)
            if not _NAME_RE.fullmatch(tok[1:]):
                raise FormalSyntaxError("bad variable name", text, base + pos)
        args.append(tok)
        pos = tm.end()
        while pos < len(s) and s[pos] == " ":
            pos += 1
        if pos >= len(s):
            raise FormalSyntaxError("unterminated argument list", text, base + pos)
        if s[pos] == ",":
            pos += 1
            continue
        if s[pos] == ")":
            pos += 1
            break
        raise FormalSyntaxError("expected ',' or ')'", text, base + pos)
    if pos != len(s):
        raise FormalSyntaxError("trailing characters", text, base + pos)
    return Predicate(m.group(0), tuple(args))


def parse_rational(value: Any) -> Fraction:
    """Exact rational from an int, a decimal/fraction string, or a float via its repr."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"not a number: {value!r}")


def _render_rational(q: Fraction) -> str:
    return str(q)


class SymbolicState:
    """Monotone set of ground facts and measure bindings, with birth steps.

    ``birth`` maps every fact (a :class:`Predicate` or :class:`MeasureBinding`)
    to the step at which it first appeared; initial facts have birth 0.
    """

    def __init__(self) -> None:
        self.facts: set[Predicate] = set()
        self.measures: dict[tuple[str, str], MeasureBinding] = {}
        self.birth: dict[Fact, int] = {}
        self._by_name: dict[str, list[Predicate]] = {}
        self._by_kind: dict[str, list[MeasureBinding]] = {}

    @classmethod
    def from_facts(cls, facts: Iterable[Fact], step: int = 0) -> "SymbolicState":
        state = cls()
        for f in facts:
            state.add(f, step)
        return state

    def copy(self) -> "SymbolicState":
        other = SymbolicState()
        other.facts = set(self.facts)
        other.measures = dict(self.measures)
        other.birth = dict(self.birth)
        other._by_name = {k: list(v) for k, v in self._by_name.items()}
        other._by_kind = {k: list(v) for k, v in self._by_kind.items()}
        return other

    def add(self, fact: Fact, step: int) -> bool:
        if isinstance(fact, MeasureBinding):
            return self.add_measure(fact, step)
        return self.add_fact(fact, step)

    def add_fact(self, fact: Predicate, step: int) -> bool:
        if not fact.is_ground():
            raise ValueError(f"cannot store non-ground fact {fact}")
        if fact in self.facts:
            return False
        self.facts.add(fact)
        self.birth[fact] = step
        self._by_name.setdefault(fact.name, []).append(fact)
        return True

    def add_measure(self, m: MeasureBinding, step: int) -> bool:
        old = self.measures.get(m.key)
        if old is not None:
            if old.value != m.value:
                raise MeasureConflict(
                    f"{m.kind}[{m.subject}] already {old.value}, re-derived as {m.value}"
                )
            return False
        self.measures[m.key] = m
        self.birth[m] = step
        self._by_kind.setdefault(m.kind, []).append(m)
        return True

    def facts_named(self, name: str) -> list[Predicate]:
        return self._by_name.get(name, [])

    def measures_of(self, kind: str) -> list[MeasureBinding]:
        return self._by_kind.get(kind, [])

    def has_name(self, name: str) -> bool:
        return bool(self._by_name.get(name))

    def has_kind(self, kind: str) -> bool:
        return bool(self._by_kind.get(kind))

    def measure(self, kind: str, subject: str) -> Fraction | None:
        m = self.measures.get((kind, subject))
        return None if m is None else m.value

    def __contains__(self, fact: object) -> bool:
        if isinstance(fact, MeasureBinding):
            return self.measures.get(fact.key) == fact
        return fact in self.facts

    def __iter__(self) -> Iterator[Fact]:
        yield from sorted(self.facts)
        yield from sorted(self.measures.values())

    def __len__(self) -> int:
        return len(self.facts) + len(self.measures)

    def summary(self) -> str:
        names: dict[str, int] = {}
        for f in self.facts:
            names[f.name] = names.get(f.name, 0) + 1
        parts = [f"{n}x{c}" for n, c in sorted(names.items())]
        parts += [str(m) for m in sorted(self.measures.values())]
        return f"{len(self.facts)} facts, {len(self.measures)} measures: " + ", ".join(parts)


@dataclass(frozen=True)
class PredicateGoal:
    fact: Predicate

    def __str__(self) -> str:
        return str(self.fact)


@dataclass(frozen=True)
class MeasureGoal:
    kind: str
    subject: str
    target: Fraction
    tolerance: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise ValueError("measure goal tolerance must be >= 0")

    def __str__(self) -> str:
        tol = f" +/- {self.tolerance}" if self.tolerance else ""
        return f"{self.kind}[{self.subject}] = {self.target}{tol}"


Goal = Union[PredicateGoal, MeasureGoal]


def goal_satisfied(state: SymbolicState, goal: Goal) -> bool:
    if isinstance(goal, PredicateGoal):
        return goal.fact in state.facts
    value = state.measure(goal.kind, goal.subject)
    if value is None:
        return False
    return abs(value - goal.target) <= goal.tolerance


@dataclass(frozen=True)
class Problem:
    id: str
    text: str
    premises: tuple[Fact, ...]
    goal: Goal
    trace: tuple[str, ...] | None = None
    level: str | None = None
    depth: int | None = None
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.trace is not None:
            if self.depth is None:
                object.__setattr__(self, "depth", len(self.trace))
            elif self.depth != len(self.trace):
                raise ProblemFormatError(
                    f"problem {self.id}: depth {self.depth} != trace length {len(self.trace)}"
                )

    def initial_state(self) -> SymbolicState:
        return SymbolicState.from_facts(self.premises, 0)


def _parse_premise(item: Any) -> Fact:
    if isinstance(item, str):
        return parse_predicate(item)
    if isinstance(item, (list, tuple)) and len(item) == 3:
        kind, subject, value = item
        return MeasureBinding(str(kind), str(subject), parse_rational(value))
    if isinstance(item, dict) and {"kind", "subject", "value"} <= item.keys():
        return MeasureBinding(str(item["kind"]), str(item["subject"]), parse_rational(item["value"]))
    raise ProblemFormatError(f"unrecognised premise {item!r}")


def _parse_goal(doc: Any) -> Goal:
    if isinstance(doc, str):
        return PredicateGoal(parse_predicate(doc))
    if not isinstance(doc, dict):
        raise ProblemFormatError(f"goal must be an object, got {doc!r}")
    kind = doc.get("type")
    if kind == "predicate":
        return PredicateGoal(parse_predicate(doc["fact"]))
    if kind == "measure":
        try:
            return MeasureGoal(
                str(doc["kind"]),
                str(doc["subject"]),
                parse_rational(doc["value"]),
                parse_rational(doc.get("tolerance", 0)),
            )
        except ValueError as exc:
            raise ProblemFormatError(f"bad measure goal: {exc}") from exc
    raise ProblemFormatError(f"unknown goal variant {kind!r}")


def load_problem(document: dict) -> Problem:
    """Build a :class:`Problem` from one corpus record."""
    if not isinstance(document, dict):
        raise ProblemFormatError("problem record must be an object")
    for key in ("id", "premises", "goal"):
        if key not in document:
            raise ProblemFormatError(f"problem record missing {key!r}")
    pid = document["id"]
    if not isinstance(pid, str) or not pid:
        raise ProblemFormatError("problem id must be a nonempty string")
    try:
        premises = tuple(_parse_premise(p) for p in document["premises"])
    except FormalSyntaxError as exc:
        raise ProblemFormatError(f"problem {pid}: {exc}") from exc
    # duplicate (kind, subject) bindings are rejected even when values agree
    seen: set[tuple[str, str]] = set()
    for p in premises:
        if isinstance(p, MeasureBinding):
            if p.key in seen:
                raise ProblemFormatError(f"problem {pid}: duplicate measure binding {p.kind}[{p.subject}]")
            seen.add(p.key)
    goal = _parse_goal(document["goal"])
    trace = document.get("trace")
    if trace is not None:
        if not all(isinstance(t, str) and t for t in trace):
            raise ProblemFormatError(f"problem {pid}: trace must be a list of theorem names")
        trace = tuple(trace)
    depth = document.get("depth")
    return Problem(
        id=pid,
        text=str(document.get("text", "")),
        premises=premises,
        goal=goal,
        trace=trace,
        level=document.get("level"),
        depth=depth,
    )


def _dump_goal(goal: Goal) -> dict:
    if isinstance(goal, PredicateGoal):
        return {"type": "predicate", "fact": str(goal.fact)}
    return {
        "type": "measure",
        "kind": goal.kind,
        "subject": goal.subject,
        "value": _render_rational(goal.target),
        "tolerance": _render_rational(goal.tolerance),
    }


def dump_problem(problem: Problem) -> dict:
    premises: list[Any] = []
    for p in problem.premises:
        if isinstance(p, MeasureBinding):
            premises.append([p.kind, p.subject, _render_rational(p.value)])
        else:
            premises.append(str(p))
    doc: dict[str, Any] = {
        "id": problem.id,
        "text": problem.text,
        "premises": premises,
        "goal": _dump_goal(problem.goal),
    }
    if problem.trace is not None:
        doc["trace"] = list(problem.trace)
    if problem.level is not None:
        doc["level"] = problem.level
    return doc


def load_corpus(path) -> tuple[list[Problem], dict]:
    """Read a corpus file: either a JSON object with ``problems`` or JSON lines.

    Returns the problems and the embedded manifest (empty for JSON lines).
    """
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    stripped = raw.lstrip()
    if stripped.startswith("["):
        records, manifest = json.loads(raw), {}
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            doc = None  # several objects: JSON lines
        if isinstance(doc, dict) and "problems" in doc:
            records, manifest = doc["problems"], doc.get("manifest", {})
        elif isinstance(doc, dict):
            records, manifest = [doc], {}
        else:
            records, manifest = _jsonl(raw), {}
    problems = [load_problem(r) for r in records]
    ids = [p.id for p in problems]
    if len(set(ids)) != len(ids):
        raise ProblemFormatError("duplicate problem ids in corpus")
    return problems, manifest


def _jsonl(raw: str) -> list[dict]:
    return [json.loads(line) for line in raw.splitlines() if line.strip()]


def save_corpus(path, problems: Iterable[Problem], manifest: dict | None = None) -> None:
    doc = {
        "format": "tpgsolve-corpus/1",
        "manifest": manifest or {},
        "problems": [dump_problem(p) for p in problems],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
