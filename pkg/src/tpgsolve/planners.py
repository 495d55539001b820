"""Planner protocol: prompt rendering, strict-JSON reply parsing, and planners."""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Protocol, Sequence

from .prioritize import BLOCKED, READY, ScoredCandidate

if TYPE_CHECKING:
    from .formal import Problem
    from .loop import SolveConfig

log = logging.getLogger(__name__)

HISTORY_LIMIT = 5

SYSTEM_PROMPT = """\
You are choosing the next theorem for a step-by-step symbolic geometry solver.
Reply with a theorem name only. Never name geometric objects or argument
bindings: the solver finds every valid instance of the theorem itself.

The candidate list is ordered by a heuristic score. The order is advice, not
an instruction; pick whichever theorem moves the state closest to the goal.

Rules:
- Choose only from the names listed under [CANDIDATES].
- A "ready" candidate has every premise type present in the state; "blocked" ones do not.
- Use the problem, the current state, the recent history and the last delta.
- When a [FAILURE] section is present, do not repeat the calls it lists.

Answer with strict JSON and nothing else: {"calls": ["theorem_name"]}"""


class PlannerError(RuntimeError):
    """A planner could not produce a usable decision for this attempt."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass(frozen=True)
class PlannerDecision:
    theorem: str


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    theorem: str
    outcome: str


@dataclass(frozen=True)
class CandidateLine:
    call: str
    status: str
    score: str


@dataclass(frozen=True)
class PromptBundle:
    problem_id: str
    statement: str
    premises: tuple[str, ...]
    goal: str
    state_summary: str
    delta: tuple[str, ...]
    candidates: tuple[CandidateLine, ...]
    history: tuple[HistoryEntry, ...]
    failures: tuple[str, ...] = ()
    recovery: bool = False

    def __post_init__(self) -> None:
        if len(self.history) > HISTORY_LIMIT:
            raise ValueError(f"history holds at most {HISTORY_LIMIT} entries")


def render_messages(bundle: PromptBundle) -> tuple[str, str]:
    lines = ["[INPUT]"]
    lines.append(f"problem: id={bundle.problem_id}")
    lines.append(f"  statement: {bundle.statement}")
    lines.append(f"  formal: {'; '.join(bundle.premises)}")
    lines.append(f"  goal: {bundle.goal}")
    lines.append(f"state: {bundle.state_summary}")
    lines.append(f"  delta_from_last_step: {'; '.join(bundle.delta) if bundle.delta else '(none)'}")
    lines.append("[CANDIDATES]")
    lines.append(f"- top_{len(bundle.candidates)}:")
    for c in bundle.candidates:
        lines.append(f"  - call: {c.call} | status: {c.status} | score: {c.score}")
    lines.append("[HISTORY]")
    lines.append("- recent steps:")
    for h in bundle.history:
        lines.append(f"  - step {h.step}: {h.theorem} -> {h.outcome}")
    if bundle.recovery:
        lines.append("[FAILURE]")
        lines.append(f"- recent failed: {', '.join(bundle.failures)}")
    lines.append("[OUTPUT]")
    lines.append('Exactly one theorem call from the candidates, as {"calls": ["<theorem>"]}.')
    return SYSTEM_PROMPT, "\n".join(lines)


def build_prompt(bundle: PromptBundle) -> str:
    system, user = render_messages(bundle)
    return f"{system}\n\n{user}\n"


def _json_objects(text: str) -> list:
    decoder = json.JSONDecoder()
    found = []
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return found
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            pos = start + 1
            continue
        found.append(obj)
        pos = end


def parse_planner_reply(text: str) -> PlannerDecision:
    """Extract the single ``{"calls": [...]}`` object and take its first call."""
    if not isinstance(text, str):
        raise PlannerError("bad-reply", "reply is not text")
    objs = _json_objects(text)
    if not objs:
        raise PlannerError("no-json", "no JSON object in reply")
    if len(objs) > 1:
        raise PlannerError("multiple-objects", f"{len(objs)} JSON objects in reply")
    obj = objs[0]
    if not isinstance(obj, dict) or "calls" not in obj:
        raise PlannerError("missing-calls", "object has no 'calls' field")
    calls = obj["calls"]
    if not isinstance(calls, list):
        raise PlannerError("bad-calls", "'calls' must be a list")
    if not calls:
        raise PlannerError("empty-calls", "'calls' is empty")
    first = calls[0]
    if not isinstance(first, str) or not first.strip():
        raise PlannerError("bad-call", f"first call is {first!r}")
    return PlannerDecision(first.strip())


@dataclass
class PlannerView:
    """Everything a planner may look at for one attempt."""

    problem: "Problem"
    step: int
    candidates: list[ScoredCandidate]
    validated: bool
    applied: list[str]
    bundle_factory: object = field(repr=False, default=None)
    deadline: float | None = None

    @property
    def eligible(self) -> list[ScoredCandidate]:
        if not self.validated:
            return list(self.candidates)
        return [c for c in self.candidates if c.readiness == READY]

    @cached_property
    def bundle(self) -> PromptBundle:
        return self.bundle_factory()


class Planner(Protocol):
    name: str

    def decide(self, view: PlannerView) -> PlannerDecision: ...


class GreedyPlanner:
    """Highest-scoring eligible candidate (the first one in rank order)."""

    name = "greedy"

    def decide(self, view: PlannerView) -> PlannerDecision:
        eligible = view.eligible
        if not eligible:
            raise PlannerError("no-candidates", "no ready candidates")
        return PlannerDecision(eligible[0].name)


class RandomPlanner:
    name = "random"

    def __init__(self, seed):
        self.rng = random.Random(seed)

    def decide(self, view: PlannerView) -> PlannerDecision:
        eligible = view.eligible
        if not eligible:
            raise PlannerError("no-candidates", "no ready candidates")
        return PlannerDecision(self.rng.choice(eligible).name)


class OraclePlanner:
    """Replays a ground-truth trace.

    Returns the next trace theorem even when it is not among the candidates,
    so the loop's off-candidate handling is exercised.
    """

    name = "oracle"

    def __init__(self, trace: Sequence[str]):
        if not trace:
            raise ValueError("oracle planner needs a nonempty trace")
        self.trace = list(trace)

    def decide(self, view: PlannerView) -> PlannerDecision:
        pos = min(len(view.applied), len(self.trace) - 1)
        return PlannerDecision(self.trace[pos])


class FixedPlanner:
    """Always proposes the same name; useful for exercising contract violations."""

    name = "fixed"

    def __init__(self, theorem: str):
        self.theorem = theorem

    def decide(self, view: PlannerView) -> PlannerDecision:
        return PlannerDecision(self.theorem)


@dataclass
class RemoteSettings:
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-5-mini"
    temperature: float = 0.1
    api_key_env: str = "TPGSOLVE_API_KEY"
    request_timeout: float = 60.0
    trace_path: str | None = None


class RemotePlanner:
    """Chat-completion planner: renders the prompt, posts it, parses the reply."""

    name = "remote"

    def __init__(self, settings: RemoteSettings, client=None):
        import httpx

        self.settings = settings
        self._client = client or httpx.Client()
        self._httpx = httpx

    def _log(self, record: dict) -> None:
        if not self.settings.trace_path:
            return
        with open(self.settings.trace_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def decide(self, view: PlannerView) -> PlannerDecision:
        system, user = render_messages(view.bundle)
        body = {
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.settings.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        timeout = self.settings.request_timeout
        if view.deadline is not None:
            timeout = min(timeout, max(view.deadline - time.monotonic(), 0.001))
        url = self.settings.base_url.rstrip("/") + "/chat/completions"
        record = {"problem": view.problem.id, "step": view.step, "request": body}
        try:
            resp = self._client.post(url, json=body, headers=headers, timeout=timeout)
            resp.raise_for_status()
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except self._httpx.TimeoutException as exc:
            self._log({**record, "error": f"timeout: {exc}"})
            raise PlannerError("timeout", str(exc)) from exc
        except (self._httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            self._log({**record, "error": f"{type(exc).__name__}: {exc}"})
            raise PlannerError("transport", str(exc)) from exc
        self._log({**record, "response": payload})
        return parse_planner_reply(content)


def make_planner(kind: str, problem: "Problem", config: "SolveConfig", client=None) -> Planner:
    if kind == "greedy":
        return GreedyPlanner()
    if kind == "random":
        return RandomPlanner(f"{config.seed}:{problem.id}")
    if kind == "oracle":
        if not problem.trace:
            raise ValueError(f"oracle planner needs a trace for {problem.id}")
        return OraclePlanner(problem.trace)
    if kind == "remote":
        return RemotePlanner(config.remote, client)
    raise ValueError(f"unknown planner kind {kind!r}")


__all__ = [
    "BLOCKED",
    "READY",
    "SYSTEM_PROMPT",
    "PlannerError",
    "PlannerDecision",
    "PromptBundle",
    "CandidateLine",
    "HistoryEntry",
    "PlannerView",
    "Planner",
    "GreedyPlanner",
    "RandomPlanner",
    "OraclePlanner",
    "FixedPlanner",
    "RemoteSettings",
    "RemotePlanner",
    "build_prompt",
    "render_messages",
    "parse_planner_reply",
    "make_planner",
]
