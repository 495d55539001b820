"""Batch evaluation, difficulty levels, coverage curves and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .engine import TheoremLibrary
from .formal import Problem
from .loop import SolveConfig, SolveResult, solve
from .retrieval import ProblemIndex, coverage, retrieve
from .tpg import export_dot

log = logging.getLogger(__name__)

LEVELS = ("L1", "L2", "L3", "L4", "L5", "L6")
CSV_HEADER = ("config", "level", "count", "solved", "accuracy", "mean_candidates", "mean_steps", "mean_ms")


def stratify(l: int) -> str:
    """Difficulty level for a solution that invokes ``l`` theorems."""
    if l < 1:
        raise ValueError(f"theorem count must be >= 1, got {l}")
    if l <= 2:
        return "L1"
    if l >= 11:
        return "L6"
    return LEVELS[(l - 1) // 2]


def problem_level(p: Problem) -> str:
    if p.level:
        return p.level
    if p.depth is None:
        raise ValueError(f"problem {p.id} has neither a level nor a depth")
    return stratify(p.depth)


@dataclass
class RunRecord:
    problem_id: str
    config_id: str
    level: str
    result: SolveResult

    @property
    def step_candidates(self) -> list[int]:
        return self.result.step_candidates


@dataclass
class LevelStats:
    count: int = 0
    solved: int = 0
    candidates: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    ms: list[float] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return 100.0 * self.solved / self.count if self.count else 0.0


@dataclass
class ConfigSummary:
    config_id: str
    digest: str
    levels: dict[str, LevelStats]
    total: LevelStats
    mean_candidates: float
    contraction_ratio: float
    failures: dict[str, int]
    times_ms: list[float]

    def accuracy(self, level: str | None = None) -> float:
        return (self.total if level is None else self.levels[level]).accuracy


@dataclass
class EvalReport:
    configs: dict[str, ConfigSummary]
    records: list[RunRecord]
    library_size: int
    manifest: dict
    coverage: list[tuple[int, float, float]] = field(default_factory=list)

    def accuracy(self, config_id: str, level: str | None = None) -> float:
        return self.configs[config_id].accuracy(level)


def _mean(xs: Sequence[float]) -> float:
    return float(statistics.fmean(xs)) if xs else 0.0


def _summarize(config_id: str, config: SolveConfig, records: list[RunRecord], library_size: int) -> ConfigSummary:
    levels = {lv: LevelStats() for lv in LEVELS}
    total = LevelStats()
    failures: dict[str, int] = {}
    all_steps: list[int] = []
    for rec in records:
        r = rec.result
        for stats in (levels[rec.level], total):
            stats.count += 1
            stats.solved += r.solved
            stats.steps.append(r.steps_used)
            stats.ms.append(1000.0 * r.wall_time)
            if r.step_candidates:
                stats.candidates.append(_mean(r.step_candidates))
        all_steps.extend(r.step_candidates)
        if not r.solved:
            failures[r.failure_reason or "unknown"] = failures.get(r.failure_reason or "unknown", 0) + 1
    mean_c = _mean(all_steps)
    return ConfigSummary(
        config_id=config_id,
        digest=config.digest(),
        levels=levels,
        total=total,
        mean_candidates=mean_c,
        contraction_ratio=mean_c / library_size if library_size else 0.0,
        failures=dict(sorted(failures.items())),
        times_ms=total.ms,
    )


def _failed_result(problem: Problem, exc: Exception) -> SolveResult:
    return SolveResult(
        problem_id=problem.id,
        solved=False,
        applied=[],
        attempts=[],
        steps_used=0,
        recovery_attempts=0,
        planner_calls=0,
        wall_time=0.0,
        failure_reason=f"error: {type(exc).__name__}: {exc}",
        step_candidates=[],
        presented=[],
    )


def run_eval(
    corpus: Sequence[Problem],
    index: ProblemIndex | None,
    library: TheoremLibrary,
    configs: Mapping[str, SolveConfig],
    *,
    workers: int = 1,
    planner_factory: Callable | None = None,
    manifest: Mapping | None = None,
) -> EvalReport:
    """Solve every (problem, config) cell and aggregate per level.

    ``planner_factory(problem, config)`` overrides the planner built from the
    config; a per-problem exception is recorded as an unsolved cell.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if not configs:
        raise ValueError("no configs")

    cells = [(cid, p) for cid in configs for p in corpus]

    def run(cell):
        cid, p = cell
        cfg = configs[cid]
        try:
            planner = planner_factory(p, cfg) if planner_factory else None
            result = solve(p, index, library, cfg, planner)
        except Exception as exc:  # recorded, never fatal
            log.warning("%s/%s failed: %s", cid, p.id, exc)
            result = _failed_result(p, exc)
        return RunRecord(p.id, cid, problem_level(p), result)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, cells))
    else:
        records = [run(c) for c in cells]
    records.sort(key=lambda r: (r.config_id, r.problem_id))

    summaries = {
        cid: _summarize(cid, configs[cid], [r for r in records if r.config_id == cid], len(library))
        for cid in sorted(configs)
    }
    man = dict(manifest or {})
    man.setdefault("library_digest", library.digest())
    man["configs"] = {cid: {"digest": configs[cid].digest(), **configs[cid].to_dict()} for cid in sorted(configs)}
    man["problems"] = len(corpus)
    if any(c.planner == "remote" for c in configs.values()):
        man["deterministic"] = False
    man["timeout_granularity"] = "checked between planner and executor calls"
    return EvalReport(summaries, records, len(library), man)


def coverage_curve(
    index: ProblemIndex,
    testset: Sequence[Problem],
    ks: Sequence[int],
    n_pool: int | None = None,
) -> list[tuple[int, float, float]]:
    ks = list(ks)
    if ks != sorted(ks):
        raise ValueError("K values must be sorted ascending")
    if ks and ks[-1] > len(index):
        raise ValueError(f"K={ks[-1]} exceeds index size {len(index)}")
    return [(k, *coverage(index, testset, k, n_pool)) for k in ks]


def report_csv(report: EvalReport | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    if report is not None:
        for cid, summary in sorted(report.configs.items()):
            for lv in LEVELS:
                s = summary.levels[lv]
                if not s.count:
                    continue
                w.writerow(
                    [
                        cid,
                        lv,
                        s.count,
                        s.solved,
                        f"{s.accuracy:.2f}",
                        f"{_mean(s.candidates):.2f}",
                        f"{_mean(s.steps):.2f}",
                        f"{_mean(s.ms):.3f}",
                    ]
                )
    return buf.getvalue()


def report_summary(report: EvalReport) -> dict:
    out = {"manifest": report.manifest, "library_size": report.library_size, "configs": {}}
    for cid, s in sorted(report.configs.items()):
        times = sorted(s.times_ms)
        out["configs"][cid] = {
            "digest": s.digest,
            "total": {"count": s.total.count, "solved": s.total.solved, "accuracy": round(s.total.accuracy, 4)},
            "levels": {
                lv: {"count": st.count, "solved": st.solved, "accuracy": round(st.accuracy, 4)}
                for lv, st in s.levels.items()
            },
            "mean_candidates": round(s.mean_candidates, 4),
            "contraction_ratio": round(s.contraction_ratio, 6),
            "failures": s.failures,
            "timing_ms": {
                "mean": round(_mean(times), 3),
                "median": round(statistics.median(times), 3) if times else 0.0,
                "max": round(times[-1], 3) if times else 0.0,
            },
        }
    if report.coverage:
        out["coverage"] = [{"k": k, "c_prob": cp, "c_th": ct} for k, cp, ct in report.coverage]
    return out


def emit_report(
    report: EvalReport | None,
    outdir,
    formats: Iterable[str] = ("csv", "json"),
    *,
    index: ProblemIndex | None = None,
    dot_problems: Sequence[Problem] = (),
    k: int = 200,
    n_pool: int | None = 30,
) -> list[Path]:
    """Write report files into ``outdir``; returns the paths written."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    formats = set(formats)
    if "csv" in formats:
        path = out / "report.csv"
        path.write_text(report_csv(report), encoding="utf-8")
        written.append(path)
    if "json" in formats and report is not None:
        path = out / "summary.json"
        path.write_text(json.dumps(report_summary(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if "dot" in formats and index is not None:
        kk = min(k, len(index))
        for p in sorted(dot_problems, key=lambda p: p.id):
            graph = retrieve(index, p, kk, n_pool).graph
            path = out / f"gq_{p.id}.dot"
            path.write_text(export_dot(graph, f"Gq_{p.id}"), encoding="utf-8")
            written.append(path)
    return written
