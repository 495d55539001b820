"""Theorem-precedence-guided planning for symbolic geometry solving."""

from .engine import START, TheoremLibrary, TheoremSchema, apply_theorem, load_library
from .formal import Predicate, Problem, SymbolicState, load_corpus, parse_predicate
from .harness import EvalReport, coverage_curve, emit_report, run_eval, stratify
from .loop import SolveConfig, SolveResult, solve
from .retrieval import ProblemIndex, build_index, knn, retrieve
from .tpg import PrecedenceGraph, extract_tpg, fuse_graphs

__version__ = "0.1.0"

__all__ = [
    "START",
    "EvalReport",
    "PrecedenceGraph",
    "Predicate",
    "Problem",
    "ProblemIndex",
    "SolveConfig",
    "SolveResult",
    "SymbolicState",
    "TheoremLibrary",
    "TheoremSchema",
    "apply_theorem",
    "build_index",
    "coverage_curve",
    "emit_report",
    "extract_tpg",
    "fuse_graphs",
    "knn",
    "load_corpus",
    "load_library",
    "parse_predicate",
    "retrieve",
    "run_eval",
    "solve",
    "stratify",
]
