"""Problem embeddings, exact cosine kNN, candidate pools and coverage metrics."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import TheoremLibrary
from .formal import MeasureBinding, MeasureGoal, Problem
from .tpg import PrecedenceGraph, extract_tpg, fuse_graphs

log = logging.getLogger(__name__)

INDEX_FORMAT = "tpgsolve-index/1"
DEFAULT_DIM = 256

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")


class RetrievalError(ValueError):
    pass


# -- embeddings ----------------------------------------------------------------


def problem_features(problem: Problem) -> list[str]:
    """Tokens hashed into the fallback embedding: text words, premise names, goal kind."""
    feats = [f"t:{w.lower()}" for w in _WORD_RE.findall(problem.text)]
    for p in problem.premises:
        if isinstance(p, MeasureBinding):
            feats.append(f"m:{p.kind}")
        else:
            feats.append(f"p:{p.name}")
    if isinstance(problem.goal, MeasureGoal):
        feats.append(f"g:measure:{problem.goal.kind}")
    else:
        feats.append(f"g:{problem.goal.fact.name}")
    return feats


def _bucket(feature: str, dim: int) -> tuple[int, float]:
    h = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    n = int.from_bytes(h, "little")
    return n % dim, (1.0 if (n >> 63) & 1 else -1.0)


def hashed_embedding(problem: Problem, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed feature hashing of :func:`problem_features`, L2-normalised."""
    vec = np.zeros(dim, dtype=np.float64)
    for feat in problem_features(problem):
        i, sign = _bucket(feat, dim)
        vec[i] += sign
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise RetrievalError(f"problem {problem.id} has no features to embed")
    return vec / norm


def embed(
    problem: Problem,
    mode: str = "hashed",
    dim: int = DEFAULT_DIM,
    sidecar: Mapping[str, Sequence[float]] | None = None,
) -> np.ndarray:
    if mode == "hashed":
        return hashed_embedding(problem, dim)
    if mode == "precomputed":
        if sidecar is None or problem.id not in sidecar:
            raise RetrievalError(f"no precomputed embedding for {problem.id!r}")
        vec = np.asarray(sidecar[problem.id], dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise RetrievalError(f"embedding for {problem.id!r} has dim {vec.shape}, expected {dim}")
        if not np.all(np.isfinite(vec)):
            raise RetrievalError(f"embedding for {problem.id!r} has non-finite entries")
        return vec
    raise RetrievalError(f"unknown embedding mode {mode!r}")


def load_sidecar(path) -> dict[str, list[float]]:
    """Read ``{"id": ..., "vector": [...]}`` records (JSON lines or a JSON list)."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    if raw.lstrip().startswith("["):
        records = json.loads(raw)
    else:
        records = [json.loads(line) for line in raw.splitlines() if line.strip()]
    return {str(r["id"]): list(r["vector"]) for r in records}


# -- index ---------------------------------------------------------------------


@dataclass
class IndexEntry:
    id: str
    embedding: np.ndarray
    theorems: frozenset[str]
    tpg: PrecedenceGraph


class ProblemIndex:
    """Immutable retrieval database over solved problems."""

    def __init__(self, entries: Sequence[IndexEntry], mode: str = "hashed", dim: int = DEFAULT_DIM):
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise RetrievalError("duplicate ids in index")
        self.entries: dict[str, IndexEntry] = {e.id: e for e in entries}
        self.ids: list[str] = ids
        self.mode = mode
        self.dim = dim
        if entries:
            mat = np.vstack([e.embedding for e in entries]).astype(np.float64)
            if mat.shape[1] != dim:
                raise RetrievalError(f"index embeddings have dim {mat.shape[1]}, expected {dim}")
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            self._unit = mat / norms
        else:
            self._unit = np.zeros((0, dim))
        self._global: PrecedenceGraph | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, pid: object) -> bool:
        return pid in self.entries

    def global_graph(self) -> PrecedenceGraph:
        """All indexed TPGs fused with ``k = N``."""
        if self._global is None:
            self._global = fuse_graphs([self.entries[i].tpg for i in self.ids], len(self.ids))
        return self._global

    def query_vector(self, problem: Problem, sidecar: Mapping[str, Sequence[float]] | None = None) -> np.ndarray:
        return embed(problem, self.mode, self.dim, sidecar)

    def to_record(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "mode": self.mode,
            "dim": self.dim,
            "entries": [
                {
                    "id": e.id,
                    "embedding": [float(x) for x in e.embedding],
                    "theorems": sorted(e.theorems),
                    "tpg": e.tpg.to_record(),
                }
                for e in (self.entries[i] for i in self.ids)
            ],
        }

    @classmethod
    def from_record(cls, doc: dict) -> "ProblemIndex":
        if doc.get("format") != INDEX_FORMAT:
            raise RetrievalError(f"unsupported index format {doc.get('format')!r}")
        entries = [
            IndexEntry(
                e["id"],
                np.asarray(e["embedding"], dtype=np.float64),
                frozenset(e["theorems"]),
                PrecedenceGraph.from_record(e["tpg"]),
            )
            for e in doc["entries"]
        ]
        return cls(entries, doc.get("mode", "hashed"), int(doc["dim"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_record(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ProblemIndex":
        with open(path, encoding="utf-8") as fh:
            return cls.from_record(json.load(fh))


def build_index(
    problems: Iterable[Problem],
    library: TheoremLibrary,
    mode: str = "hashed",
    dim: int = DEFAULT_DIM,
    sidecar: Mapping[str, Sequence[float]] | None = None,
) -> ProblemIndex:
    entries = []
    for p in problems:
        if p.trace is None:
            raise RetrievalError(f"problem {p.id} has no trace; cannot index")
        tpg = extract_tpg(p, p.trace, library)
        entries.append(IndexEntry(p.id, embed(p, mode, dim, sidecar), frozenset(p.trace), tpg))
    log.info("indexed %d problems (%s, dim=%d)", len(entries), mode, dim)
    return ProblemIndex(entries, mode, dim)


def knn(index: ProblemIndex, query: np.ndarray, k: int) -> list[str]:
    """Top-``k`` ids by cosine similarity, ties broken by ascending id."""
    n = len(index)
    if n == 0:
        raise RetrievalError("empty index")
    if not 1 <= k <= n:
        raise RetrievalError(f"k={k} outside [1, {n}]")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (index.dim,):
        raise RetrievalError(f"query dim {q.shape} != index dim {index.dim}")
    qn = np.linalg.norm(q)
    sims = index._unit @ (q / qn if qn else q)
    order = sorted(range(n), key=lambda i: (-sims[i], index.ids[i]))
    return [index.ids[i] for i in order[:k]]


# -- query prior ---------------------------------------------------------------


@dataclass(frozen=True)
class CandidatePool:
    """Theorems ranked by neighbour frequency (descending, then by name)."""

    entries: tuple[tuple[str, int], ...]

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def frequency(self, name: str) -> int:
        for n, f in self.entries:
            if n == name:
                return f
        return 0

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class QueryPrior:
    pool: CandidatePool
    graph: PrecedenceGraph
    neighbors: tuple[str, ...]
    k: int


def build_pool(theorem_sets: Iterable[Iterable[str]], n_pool: int | None) -> CandidatePool:
    counts: Counter[str] = Counter()
    for ts in theorem_sets:
        counts.update(set(ts))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if n_pool is not None:
        if n_pool < 0:
            raise ValueError("n_pool must be >= 0")
        ranked = ranked[:n_pool]
    return CandidatePool(tuple(ranked))


def build_query_prior(index: ProblemIndex, neighbors: Sequence[str], k: int, n_pool: int | None) -> QueryPrior:
    """Pool from neighbour theorem sets (truncated) and fused neighbour TPGs (untruncated)."""
    missing = [n for n in neighbors if n not in index]
    if missing:
        raise RetrievalError(f"unknown neighbour id(s): {missing[:5]}")
    entries = [index.entries[n] for n in neighbors]
    pool = build_pool((e.theorems for e in entries), n_pool)
    graph = fuse_graphs([e.tpg for e in entries], k)
    return QueryPrior(pool, graph, tuple(neighbors), k)


def retrieve(
    index: ProblemIndex,
    problem: Problem,
    k: int,
    n_pool: int | None,
    sidecar: Mapping[str, Sequence[float]] | None = None,
) -> QueryPrior:
    neighbors = knn(index, index.query_vector(problem, sidecar), k)
    return build_query_prior(index, neighbors, k, n_pool)


def coverage(
    index: ProblemIndex,
    testset: Sequence[Problem],
    k: int,
    n_pool: int | None,
    sidecar: Mapping[str, Sequence[float]] | None = None,
) -> tuple[float, float]:
    """Problem coverage and theorem coverage of the retrieved pools."""
    if not testset:
        raise RetrievalError("empty test set")
    full = 0
    hit = 0
    total = 0
    for p in testset:
        if p.trace is None:
            raise RetrievalError(f"problem {p.id} has no ground-truth trace")
        required = set(p.trace)
        pool = set(retrieve(index, p, k, n_pool, sidecar).pool.names)
        covered = len(required & pool)
        full += covered == len(required)
        hit += covered
        total += len(required)
    return full / len(testset), (hit / total if total else 1.0)

