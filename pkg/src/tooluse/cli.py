"""Command-line entry points.

    tooluse gen     --domain mini-home --scenes 5 --out scenes/
    tooluse demo    --domain mini-home --scenes 20 --out corpus/
    tooluse train   --domain mini-home --corpus corpus/ --out run/
    tooluse eval    --domain mini-home --corpus corpus/ --checkpoint run/checkpoint.json --out report/
    tooluse replay  --domain mini-home --trace corpus/traces.ndjson
    tooluse serve   --port 8800 --out traces/

Exit codes: 0 success, 2 configuration error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .domains import load_catalog
from .estimator import ToolPolicyEstimator
from .oracle import (
    DemonstrationTrace, augment, build_corpus, load_corpus, save_corpus,
    tool_usage_ranking, validate_trace,
)
from .train import make_splits
from .validation import ValidationFailure, check_trace_record
from .world import goal_check, state_to_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise SystemExit(EXIT_CONFIG)
    return json.loads(p.read_text())


def _catalog(args) -> "DomainCatalog":
    try:
        return load_catalog(args.domain)
    except Exception as exc:
        print("cannot load catalog %r: %s" % (args.domain, exc), file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def cmd_gen(args) -> int:
    catalog = _catalog(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .domains import sample_scene
    for i in range(args.scenes):
        seed = args.seed + i
        state = sample_scene(catalog, seed)
        (out / ("scene_%04d.json" % seed)).write_text(state_to_json(state) + "\n")
    print("wrote %d scenes to %s" % (args.scenes, out))
    return EXIT_OK


def cmd_demo(args) -> int:
    catalog = _catalog(args)
    cfg = _load_config(args.config)
    scene_seeds = range(args.seed, args.seed + args.scenes)
    corpus = build_corpus(catalog, scene_seeds, seed=args.seed,
                          variants=cfg.get("variants", args.variants),
                          budget=cfg.get("budget", args.budget))
    if not args.no_augment:
        corpus = augment(corpus, catalog, seed=args.seed + 1,
                         replay_seeds=list(scene_seeds))
    corpus.splits = make_splits(corpus, seed=args.seed)
    save_corpus(corpus, args.out)
    print("corpus: %d traces -> %s" % (len(corpus.traces), args.out))
    return EXIT_OK


def cmd_train(args) -> int:
    catalog = _catalog(args)
    cfg = _load_config(args.config)
    try:
        corpus = load_corpus(args.corpus, catalog)
    except Exception as exc:
        print("cannot load corpus: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = ToolPolicyEstimator(seed=args.seed)
    known = set(est.get_params())
    est.set_params(**{k: v for k, v in cfg.items() if k in known})
    if args.embeddings:
        est.set_params(embeddings=args.embeddings)
    splits = corpus.splits or None
    est.fit(corpus, catalog, splits=splits, log_path=out / "metrics.ndjson")
    est.save(out / "checkpoint.json")
    print("trained; checkpoint at %s" % (out / "checkpoint.json"))
    return EXIT_OK


def cmd_eval(args) -> int:
    catalog = _catalog(args)
    cfg = _load_config(args.config)
    if not args.checkpoint or not Path(args.checkpoint).is_file():
        print("eval requires --checkpoint pointing at a trained model", file=sys.stderr)
        return EXIT_CONFIG
    est = ToolPolicyEstimator.load(args.checkpoint, catalog)
    corpus = load_corpus(args.corpus, catalog) if args.corpus else None
    from .evaluation import build_base_suite, build_perturbed_suite, run_suites, SUITE_KINDS
    scene_seeds = range(args.seed + 1000, args.seed + 1000 + args.pairs)
    base = build_base_suite(catalog, scene_seeds, budget=cfg.get("budget", args.budget))
    usage = tool_usage_ranking(corpus, catalog) if corpus else {}
    suites = {}
    for kind in (args.suites.split(",") if args.suites else SUITE_KINDS):
        suites[kind] = build_perturbed_suite(kind, catalog, base, usage,
                                             budget=cfg.get("budget", args.budget),
                                             seed=args.seed, limit=args.pairs)
    test_traces = corpus.by_split("test") if corpus else ()
    report = run_suites(est.policy_, catalog, base, suites, test_traces=test_traces,
                        seed=args.seed, terminate_on_rejection=args.terminate_on_rejection)
    out = Path(args.out)
    report.write(out)
    print(report.summary())
    return EXIT_OK


def cmd_replay(args) -> int:
    catalog = _catalog(args)
    path = Path(args.trace)
    if not path.is_file():
        print("no trace file at %s" % path, file=sys.stderr)
        return EXIT_CONFIG
    ok = True
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    for record in records:
        try:
            check_trace_record(record, catalog)
            trace = DemonstrationTrace.from_record(record, catalog)
        except (ValidationFailure, Exception) as exc:
            print("%s: invalid record: %s" % (record.get("trace_id", "?"), exc))
            ok = False
            continue
        if validate_trace(trace) and goal_check(trace.final_state, trace.goal) == trace.success:
            print("%s: replay ok, %s" % (trace.trace_id,
                                         "goal reached" if trace.success else "goal not reached"))
            if not trace.success:
                ok = False
        else:
            print("%s: replay mismatch" % trace.trace_id)
            ok = False
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    app = create_app(trace_dir=args.out, checkpoint=args.checkpoint,
                     static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tooluse")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--domain", default="mini-home")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default="out")

    p = sub.add_parser("gen", help="sample scenes to JSON files")
    common(p)
    p.add_argument("--scenes", type=int, default=5)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("demo", help="generate an oracle demonstration corpus")
    common(p)
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--variants", type=int, default=3)
    p.add_argument("--budget", type=int, default=60000)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(fn=cmd_demo)

    p = sub.add_parser("train", help="train the policy on a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", default=None,
                   help="'synthetic' or 'file:<path>' vector file")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="run the evaluation suites")
    common(p)
    p.add_argument("--corpus", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--budget", type=int, default=60000)
    p.add_argument("--suites", default=None, help="comma-separated suite kinds")
    p.add_argument("--terminate-on-rejection", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("replay", help="re-execute trace records and verify them")
    common(p)
    p.add_argument("--trace", required=True)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="start the teaching session service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--static", default=None, help="directory of built UI assets")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except ValidationFailure as exc:
        print("validation failure: %s" % exc, file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
