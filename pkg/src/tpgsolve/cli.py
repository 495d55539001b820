"""Command-line entry point: ``tpgsolve <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .engine import load_library, save_library
from .formal import load_corpus, save_corpus
from .harness import coverage_curve, emit_report, run_eval
from .loop import PRESETS, ConfigError, SolveConfig, load_config, solve
from .retrieval import DEFAULT_DIM, ProblemIndex, build_index, load_sidecar, retrieve
from .synth import GeneratorSpec, gen_corpus, gen_problems
from .tpg import export_dot, extract_tpg

log = logging.getLogger("tpgsolve")


def _csv_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _opt_int(text: str) -> int | None:
    return None if text.lower() in ("none", "inf", "null") else int(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver config (override --config)")
    g.add_argument("--config", type=Path, help="JSON run config")
    g.add_argument("--k", type=int)
    g.add_argument("--n-pool", type=_opt_int, help="pool size, or 'none' for unbounded")
    g.add_argument("--window", type=_opt_int)
    g.add_argument("--t-max", type=int)
    g.add_argument("--timeout", type=float)
    g.add_argument("--max-recovery", type=int)
    g.add_argument("--planner", choices=("oracle", "greedy", "random", "remote"))
    g.add_argument("--seed", type=int)
    g.add_argument("--prior-level", choices=("global", "query", "state"))
    g.add_argument("--no-retrieval", dest="use_retrieval", action="store_false", default=None)
    g.add_argument("--no-tpg", dest="use_tpg", action="store_false", default=None)
    g.add_argument("--base-url", help="remote planner endpoint")
    g.add_argument("--model", help="remote planner model name")
    g.add_argument("--trace-file", help="append remote request/response records here")


_OVERRIDES = ("k", "n_pool", "window", "t_max", "timeout", "max_recovery", "planner", "seed", "prior_level", "use_retrieval", "use_tpg")


def _config(args) -> tuple[SolveConfig, dict]:
    cfg, extra = (load_config(args.config) if args.config else (SolveConfig(), {}))
    over = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    remote = {}
    if args.base_url:
        remote["base_url"] = args.base_url
    if args.model:
        remote["model"] = args.model
    if args.trace_file:
        remote["trace_path"] = args.trace_file
    if remote:
        over["remote"] = type(cfg.remote)(**{**cfg.remote.__dict__, **remote})
    return cfg.updated(**over), extra


def _sidecar(args):
    return load_sidecar(args.sidecar) if getattr(args, "sidecar", None) else None


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- commands ------------------------------------------------------------------


def cmd_corpus_gen(args) -> int:
    spec = GeneratorSpec(
        seed=args.seed,
        library_size=args.library_size,
        layers=args.layers,
        problems_per_bucket=args.per_bucket,
        distractor_factor=args.distractors,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    corpus = gen_corpus(spec)
    save_library(out / "library.json", corpus.library)
    save_corpus(out / "corpus.json", corpus.problems, corpus.manifest)
    written = ["library.json", "corpus.json"]
    if args.test_per_bucket:
        test_spec = GeneratorSpec(**{**spec.to_dict(), "buckets": spec.buckets, "problems_per_bucket": args.test_per_bucket})
        test = gen_problems(test_spec, corpus.library, "test")
        save_corpus(out / "test.json", test, {**corpus.manifest, "split": "test"})
        written.append("test.json")
    print(f"wrote {', '.join(written)} to {out} ({len(corpus.library)} theorems, {len(corpus.problems)} problems)")
    return 0


def cmd_index_build(args) -> int:
    library = load_library(args.library)
    problems, _ = load_corpus(args.corpus)
    index = build_index(problems, library, args.embedding, args.dim, _sidecar(args))
    index.save(args.out)
    print(f"indexed {len(index)} problems -> {args.out}")
    return 0


def cmd_solve(args) -> int:
    cfg, _ = _config(args)
    library = load_library(args.library)
    problems, _ = load_corpus(args.corpus)
    by_id = {p.id: p for p in problems}
    if args.problem_id not in by_id:
        print(f"no problem {args.problem_id!r} in {args.corpus}", file=sys.stderr)
        return 2
    index = ProblemIndex.load(args.index) if args.index else None
    result = solve(by_id[args.problem_id], index, library, cfg)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    base, extra = _config(args)
    library = load_library(args.library)
    problems, manifest = load_corpus(args.corpus)
    index = ProblemIndex.load(args.index) if args.index else None
    names = args.presets or extra.get("eval", {}).get("presets") or ["run"]
    configs = {}
    for name in names:
        if name == "run":
            configs[name] = base
        elif name in PRESETS:
            configs[name] = base.updated(**PRESETS[name])
        else:
            print(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", file=sys.stderr)
            return 2
    report = run_eval(problems, index, library, configs, workers=args.workers, manifest={"corpus": manifest})
    if args.coverage_ks and index is not None:
        report.coverage = coverage_curve(index, problems, _csv_ints(args.coverage_ks), base.n_pool)
    formats = ["csv", "json"] + (["dot"] if args.dot else [])
    sample = sorted(problems, key=lambda p: p.id)[: args.dot]
    paths = emit_report(report, args.out, formats, index=index, dot_problems=sample, k=base.k, n_pool=base.n_pool)
    for cid, s in sorted(report.configs.items()):
        print(f"{cid}: {s.total.accuracy:.2f}% ({s.total.solved}/{s.total.count}), mean candidates {s.mean_candidates:.2f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_coverage(args) -> int:
    index = ProblemIndex.load(args.index)
    problems, _ = load_corpus(args.corpus)
    ks = _csv_ints(args.ks) if args.ks else [1, 5, 10, 25, 50, 100, len(index)]
    ks = sorted({min(k, len(index)) for k in ks})
    print("k,c_prob,c_th")
    for k, cp, ct in coverage_curve(index, problems, ks, args.n_pool):
        print(f"{k},{cp:.4f},{ct:.4f}")
    return 0


def cmd_tpg_export(args) -> int:
    library = load_library(args.library)
    problems, _ = load_corpus(args.corpus)
    by_id = {p.id: p for p in problems}
    if args.problem_id not in by_id:
        print(f"no problem {args.problem_id!r} in {args.corpus}", file=sys.stderr)
        return 2
    p = by_id[args.problem_id]
    if args.index:
        index = ProblemIndex.load(args.index)
        graph = retrieve(index, p, min(args.k, len(index)), args.n_pool).graph
        name = f"Gq_{p.id}"
    else:
        if not p.trace:
            print(f"problem {p.id} has no trace", file=sys.stderr)
            return 2
        graph = extract_tpg(p, p.trace, library)
        name = f"G_{p.id}"
    text = export_dot(graph, name)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpgsolve", description="Precedence-guided theorem planning for symbolic solving.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="synthetic corpora").add_subparsers(dest="action", required=True)
    p = corpus.add_parser("gen", help="generate a library plus train/test problems")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--library-size", type=int, default=300)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--per-bucket", type=int, default=100)
    p.add_argument("--test-per-bucket", type=int, default=20)
    p.add_argument("--distractors", type=float, default=3.0, help="distractor facts per chain fact")
    p.set_defaults(func=cmd_corpus_gen)

    index = sub.add_parser("index", help="retrieval index").add_subparsers(dest="action", required=True)
    p = index.add_parser("build")
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--embedding", choices=("hashed", "precomputed"), default="hashed")
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--sidecar", type=Path, help="precomputed vectors (JSON lines: id, vector)")
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("solve", help="solve one problem and print the result")
    p.add_argument("problem_id")
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--index", type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="batch evaluation and report files")
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--presets", nargs="+", help=f"ablation presets: {', '.join(PRESETS)}")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--coverage-ks", help="comma-separated K values for a coverage curve")
    p.add_argument("--dot", type=int, default=0, help="dump G_q for the first N problems")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("coverage", help="coverage curve over K")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--ks", help="comma-separated K values (default 1,5,10,25,50,100,N)")
    p.add_argument("--n-pool", type=_opt_int, default=None)
    p.set_defaults(func=cmd_coverage)

    tpg = sub.add_parser("tpg", help="precedence graphs").add_subparsers(dest="action", required=True)
    p = tpg.add_parser("export", help="DOT for one problem's graph, or its fused G_q with --index")
    p.add_argument("problem_id")
    p.add_argument("--library", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--n-pool", type=_opt_int, default=30)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_tpg_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
