"""Plan-execute-recover controller and its run configuration."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from typing import Any, Mapping

from .engine import START, Applied, NoNewFacts, TheoremLibrary, apply_theorem
from .formal import MeasureConflict, Problem, SymbolicState, goal_satisfied
from .planners import (
    CandidateLine,
    HistoryEntry,
    HISTORY_LIMIT,
    Planner,
    PlannerError,
    PlannerView,
    PromptBundle,
    RemoteSettings,
    make_planner,
)
from .prioritize import (
    BLOCKED,
    DEFAULT_KEYWORDS,
    READY,
    ScoreWeights,
    StepContext,
    goal_category,
    localize_graph,
    prune_candidates,
    rank,
    score,
)
from .retrieval import CandidatePool, ProblemIndex, retrieve
from .tpg import PrecedenceGraph

log = logging.getLogger(__name__)

PRIOR_LEVELS = ("global", "query", "state")
PLANNER_KINDS = ("oracle", "greedy", "random", "remote")

REASON_STEP_BUDGET = "step-budget"
REASON_TIMEOUT = "timeout"
REASON_PLANNER = "planner-exhausted"
REASON_EXECUTOR = "executor-error"


class ConfigError(ValueError):
    pass


@dataclass
class SolveConfig:
    k: int = 200
    n_pool: int | None = 30
    window: int | None = 30
    t_max: int = 20
    timeout: float = 600.0
    max_recovery: int = 3
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    keywords: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_KEYWORDS.items()})
    planner: str = "greedy"
    seed: int = 0
    use_retrieval: bool = True
    use_tpg: bool = True
    prior_level: str = "state"
    show_blocked: bool = True
    remote: RemoteSettings = field(default_factory=RemoteSettings)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        # t_max = 0 is accepted so budget-exhaustion paths can be run directly
        if self.t_max < 0:
            raise ConfigError("t_max must be >= 0")
        if self.max_recovery < 0:
            raise ConfigError("max_recovery must be >= 0")
        if not self.timeout > 0:
            raise ConfigError("timeout must be > 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n_pool is not None and self.n_pool < 1:
            raise ConfigError("n_pool must be >= 1 (or null for unbounded)")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be >= 1 (or null for unbounded)")
        if self.prior_level not in PRIOR_LEVELS:
            raise ConfigError(f"prior_level must be one of {PRIOR_LEVELS}")
        if self.planner not in PLANNER_KINDS:
            raise ConfigError(f"planner must be one of {PLANNER_KINDS}")

    @property
    def mode(self) -> str:
        """Effective prior: vanilla, no-tpg, global, query or state."""
        if not self.use_tpg:
            return "no-tpg" if self.use_retrieval else "vanilla"
        if not self.use_retrieval or self.prior_level == "global":
            return "global"
        return self.prior_level

    @property
    def validated(self) -> bool:
        """Whether candidates are checked against the state (symbolic pruning)."""
        return self.mode in ("state", "no-tpg")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_mapping()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SolveConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        kwargs = dict(doc)
        if "weights" in kwargs and not isinstance(kwargs["weights"], ScoreWeights):
            kwargs["weights"] = ScoreWeights.from_mapping(kwargs["weights"])
        if "remote" in kwargs and not isinstance(kwargs["remote"], RemoteSettings):
            kwargs["remote"] = RemoteSettings(**kwargs["remote"])
        return cls(**kwargs)

    def updated(self, **overrides) -> "SolveConfig":
        return replace(self, **{k: v for k, v in overrides.items()})


PRESETS: dict[str, dict[str, Any]] = {
    "vanilla": {"use_retrieval": False, "use_tpg": False},
    "global": {"use_retrieval": False, "use_tpg": True, "prior_level": "global"},
    "query": {"prior_level": "query"},
    "state": {"prior_level": "state"},
    "no-tpg": {"use_tpg": False},
}


@dataclass(frozen=True)
class AttemptRecord:
    step: int
    attempt: int
    theorem: str | None
    outcome: str
    new_items: int = 0
    detail: str = ""


@dataclass
class SolveResult:
    problem_id: str
    solved: bool
    applied: list[str]
    attempts: list[AttemptRecord]
    steps_used: int
    recovery_attempts: int
    planner_calls: int
    wall_time: float
    failure_reason: str | None
    step_candidates: list[int]
    presented: list[int]
    final_state: SymbolicState | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "solved": self.solved,
            "applied": list(self.applied),
            "steps_used": self.steps_used,
            "recovery_attempts": self.recovery_attempts,
            "planner_calls": self.planner_calls,
            "wall_time": round(self.wall_time, 6),
            "failure_reason": self.failure_reason,
            "step_candidates": list(self.step_candidates),
            "attempts": [asdict(a) for a in self.attempts],
        }


@dataclass
class _Prior:
    pool: CandidatePool
    graph: PrecedenceGraph | None
    neighbors: tuple[str, ...] = ()


def assemble_prior(problem: Problem, index: ProblemIndex | None, library: TheoremLibrary, config: SolveConfig) -> _Prior:
    mode = config.mode
    if mode in ("vanilla", "global"):
        pool = CandidatePool(tuple((n, 0) for n in library.names))
        graph = None
        if mode == "global":
            if index is None or not len(index):
                raise ConfigError("global prior needs a nonempty index")
            graph = index.global_graph()
        return _Prior(pool, graph)
    if index is None or not len(index):
        raise ConfigError("retrieval needs a nonempty index")
    k = min(config.k, len(index))
    prior = retrieve(index, problem, k, config.n_pool)
    unknown = [n for n in prior.pool.names if n not in library]
    if unknown:
        raise ConfigError(f"pool names missing from library: {unknown[:5]}")
    graph = prior.graph if mode in ("query", "state") else None
    return _Prior(prior.pool, graph, prior.neighbors)


def solve(
    problem: Problem,
    index: ProblemIndex | None,
    library: TheoremLibrary,
    config: SolveConfig,
    planner: Planner | None = None,
    *,
    clock=time.monotonic,
) -> SolveResult:
    """Run the plan-execute-recover loop on one problem."""
    started = clock()
    deadline = started + config.timeout
    planner = planner or make_planner(config.planner, problem, config)
    prior = assemble_prior(problem, index, library, config)
    mode = config.mode
    validated = config.validated
    window = config.window if config.use_retrieval else None
    freq = dict(prior.pool.entries)
    pool_names = prior.pool.names
    category = goal_category(problem.goal, config.keywords)

    state = problem.initial_state()
    applied: list[str] = []
    attempts: list[AttemptRecord] = []
    counts: dict[str, int] = {}
    failed: list[str] = []
    recovery = False
    previous = START
    delta: tuple[str, ...] = ()
    step_candidates: list[int] = []
    presented: list[int] = []
    localized: dict[str, PrecedenceGraph] = {}
    planner_calls = 0
    recovery_attempts = 0
    steps_used = 0
    last_step_exhausted = False

    def finish(solved: bool, reason: str | None) -> SolveResult:
        return SolveResult(
            problem_id=problem.id,
            solved=solved,
            applied=applied,
            attempts=attempts,
            steps_used=steps_used,
            recovery_attempts=recovery_attempts,
            planner_calls=planner_calls,
            wall_time=clock() - started,
            failure_reason=reason,
            step_candidates=step_candidates,
            presented=presented,
            final_state=state,
        )

    if goal_satisfied(state, problem.goal):
        return finish(True, None)

    for t in range(1, config.t_max + 1):
        steps_used = t
        last_step_exhausted = False
        for attempt in range(config.max_recovery + 1):
            if clock() >= deadline:
                return finish(False, REASON_TIMEOUT)
            ctx = StepContext(
                step=t,
                previous=previous,
                counts=counts,
                recovery=recovery,
                failed=frozenset(failed),
                category=category,
            )
            if validated:
                ready, blocked = prune_candidates(pool_names, state, library)
                status = {n: READY for n in ready}
                status.update({n: BLOCKED for n in blocked})
                names = pool_names if config.show_blocked else ready
                eligible_count = len(ready)
            else:
                status = {}
                names = pool_names
                eligible_count = len(pool_names)
            graph = prior.graph
            if graph is not None and mode == "state":
                if previous not in localized:
                    localized[previous] = localize_graph(graph, previous)
                graph = localized[previous]
            scored = [
                score(
                    n,
                    ctx,
                    graph,
                    freq.get(n, 0),
                    readiness=status.get(n),
                    weights=config.weights,
                    keywords=config.keywords,
                )
                for n in names
            ]
            ranked = rank(scored, window)
            if attempt == 0:
                step_candidates.append(eligible_count)
                presented.append(len(ranked))

            def bundle_factory(ranked=ranked, t=t):
                return _bundle(problem, state, delta, ranked, attempts, failed, recovery, validated)

            view = PlannerView(
                problem=problem,
                step=t,
                candidates=ranked,
                validated=validated,
                applied=applied,
                bundle_factory=bundle_factory,
                deadline=deadline,
            )
            planner_calls += 1
            try:
                decision = planner.decide(view)
            except PlannerError as exc:
                attempts.append(AttemptRecord(t, attempt, None, "planner-error", detail=exc.code))
                recovery_attempts += attempt > 0
                continue
            name = decision.theorem
            if name not in {c.name for c in ranked} or name not in library:
                attempts.append(AttemptRecord(t, attempt, name, "invalid-decision"))
                failed.append(name)
                recovery = True
                recovery_attempts += attempt > 0
                continue
            try:
                state, outcome = apply_theorem(state, library[name], t)
            except MeasureConflict as exc:
                attempts.append(AttemptRecord(t, attempt, name, "executor-error", detail=str(exc)))
                return finish(False, REASON_EXECUTOR)
            if isinstance(outcome, Applied):
                new = len(outcome.new_facts) + len(outcome.new_measures)
                attempts.append(AttemptRecord(t, attempt, name, "applied", new))
                applied.append(name)
                counts[name] = counts.get(name, 0) + 1
                previous = name
                recovery = False
                failed.clear()
                delta = tuple(str(f) for f in outcome.new_facts) + tuple(str(m) for m in outcome.new_measures)
                recovery_attempts += attempt > 0
                if goal_satisfied(state, problem.goal):
                    return finish(True, None)
                break
            label = "no-new-facts" if isinstance(outcome, NoNewFacts) else "premise-unsatisfied"
            attempts.append(AttemptRecord(t, attempt, name, label))
            failed.append(name)
            recovery = True
            recovery_attempts += attempt > 0
        else:
            last_step_exhausted = True

    return finish(False, REASON_PLANNER if last_step_exhausted else REASON_STEP_BUDGET)


def _bundle(problem, state, delta, ranked, attempts, failed, recovery, validated) -> PromptBundle:
    lines = tuple(
        CandidateLine(
            c.name,
            c.readiness if validated and c.readiness else "unchecked",
            _fmt_score(c.total),
        )
        for c in ranked
    )
    history = tuple(
        HistoryEntry(a.step, a.theorem or "(none)", a.outcome) for a in attempts[-HISTORY_LIMIT:]
    )
    return PromptBundle(
        problem_id=problem.id,
        statement=problem.text,
        premises=tuple(str(p) for p in problem.premises),
        goal=str(problem.goal),
        state_summary=state.summary(),
        delta=delta,
        candidates=lines,
        history=history,
        failures=tuple(dict.fromkeys(failed)) if recovery else (),
        recovery=recovery,
    )


def _fmt_score(value: Fraction) -> str:
    return f"{float(value):.2f}"


def load_config(path) -> tuple[SolveConfig, dict]:
    """Read a JSON run config; returns the solve config and any extra sections."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    extra = {k: doc.pop(k) for k in list(doc) if k in ("eval", "generator", "index")}
    return SolveConfig.from_dict(doc), extra
