"""The ``redforge`` command line: every pipeline stage as a subcommand plus
an end-to-end runner over a config file."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import FilterConfig, PrefConfig, load_config
from .filtering import QualityScorer, apply_rule_filters, run_filter, train_quality_scorer
from .metrics import EvalScore, aggregate_report, render_report_table, render_text_histogram
from .mixture import NgramMixtureProxy, run_mixture_search
from .packing import pack_corpus
from .pipeline import (
    pref_stage,
    report_stats,
    run_pipeline,
    score_task,
    sft_stage,
)
from .preference import DpoParams, DpoLogProbs, dpo_batch_objective
from .records import Document, parse_jsonl, write_jsonl
from .toydata import write_toy_workspace


def _threads(args: argparse.Namespace) -> int:
    value = args.threads if args.threads is not None else os.environ.get("REDFORGE_THREADS", "1")
    n = int(value)
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    return n


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = load_config(args.config).filter if args.config else FilterConfig()
    docs, errors = parse_jsonl(args.input, Document)
    for err in errors:
        print(f"warning: {args.input}: {err}", file=sys.stderr)
    if args.seed_corpus:
        seeds, seed_errors = parse_jsonl(args.seed_corpus, Document)
        for err in seed_errors:
            print(f"warning: {args.seed_corpus}: {err}", file=sys.stderr)
        scorer = train_quality_scorer(seeds, cfg.scorer_order, cfg.smoothing_k)
    else:
        survivors = [d for d in docs if not apply_rule_filters(d, cfg).rule_hits]
        if survivors:
            scorer = train_quality_scorer(survivors, cfg.scorer_order, cfg.smoothing_k)
        else:
            scorer = QualityScorer(cfg.scorer_order, cfg.smoothing_k)
    kept, rejected, report = run_filter(docs, cfg, scorer)
    write_jsonl(args.out, kept)
    write_jsonl(args.rejects, rejected)
    _write_json(args.report, report.to_json_dict())
    print(f"kept {report.kept_docs}/{report.input_docs} docs (retention {report.retention:.4f})")
    return 0


def cmd_pack(args: argparse.Namespace) -> int:
    docs, errors = parse_jsonl(args.input, Document)
    for err in errors:
        print(f"warning: {args.input}: {err}", file=sys.stderr)
    packed, groups, orphans = pack_corpus(docs, args.threshold)
    write_jsonl(args.out, packed)
    print(f"packed {len(docs)} docs ({len(groups)} groups, {len(orphans)} orphans) "
          f"into {len(packed)} sequences")
    return 0


def cmd_mix(args: argparse.Namespace) -> int:
    shards = {}
    for pair in args.domains.split(","):
        if "=" not in pair:
            raise SystemExit(f"--domains entries must look like name=path, got '{pair}'")
        name, path = pair.split("=", 1)
        docs, errors = parse_jsonl(path, Document)
        for err in errors:
            print(f"warning: {path}: {err}", file=sys.stderr)
        shards[name] = docs
    proxy = NgramMixtureProxy(shards)
    outcome = run_mixture_search(
        proxy, proxy.domains, n_samples=args.samples, seed=args.seed,
        n_search=args.search, top_k=args.top_k, prune_epsilon=args.prune_epsilon,
    )
    _write_json(args.out, outcome.to_json_dict())
    for domain, weight in zip(outcome.weights.domains, outcome.weights.weights):
        print(f"{domain}: {weight:.4f}")
    return 0


def cmd_build_sft(args: argparse.Namespace) -> int:
    from .config import PipelineConfig, SftConfig

    cfg = PipelineConfig(sft=SftConfig(r1=args.r1, r2=args.r2, allow_replacement=args.allow_replacement))
    workspace = Path(args.out_step1).parent
    workspace.mkdir(parents=True, exist_ok=True)
    produced = sft_stage(cfg, Path(args.sns), Path(args.general), args.seed, workspace)
    _rename(workspace / "sft_step1.jsonl", Path(args.out_step1))
    _rename(workspace / "sft_step2.jsonl", Path(args.out_step2))
    _rename(workspace / "stats.json", Path(args.stats))
    extras = [n for n in produced if n not in ("sft_step1.jsonl", "sft_step2.jsonl", "stats.json")]
    print(f"wrote {args.out_step1}, {args.out_step2}, {args.stats} (+ {', '.join(extras)})")
    return 0


def _rename(src: Path, dst: Path) -> None:
    if src.resolve() != dst.resolve():
        dst.parent.mkdir(parents=True, exist_ok=True)
        src.replace(dst)


def cmd_build_pref(args: argparse.Namespace) -> int:
    from .config import PipelineConfig

    cfg = PipelineConfig(pref=PrefConfig(tau=args.tau))
    out_dir = Path(args.out).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    pref_stage(
        cfg,
        Path(args.mc),
        Path(args.pred_log) if args.pred_log else None,
        Path(args.judged) if args.judged else None,
        Path(args.calibration) if args.calibration else None,
        out_dir,
    )
    _rename(out_dir / "pairs.jsonl", Path(args.out))
    _rename(out_dir / "pref_report.json", Path(args.report))
    with open(args.report, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    print(f"pairs: {report['unique_pairs']} unique "
          f"(ordinal={report['ordinal']} error={report['error']} judge={report['judge']})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    score = score_task(args.task, args.metric, args.pred, args.gold)
    _write_json(args.out, score.to_json_dict())
    print(f"{score.task} {score.metric}: {score.value:.2f}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if bool(args.scores) == bool(args.run_dir):
        print("error: pass exactly one of --scores or --run-dir", file=sys.stderr)
        return 2
    if args.scores:
        scores = []
        for path in sorted(Path(args.scores).glob("*.json")):
            with open(path, "r", encoding="utf-8") as fh:
                scores.append(EvalScore.from_json_dict(json.load(fh)))
        if not scores:
            print(f"error: no score files in {args.scores}", file=sys.stderr)
            return 1
        report = aggregate_report(scores)
        if args.out:
            _write_json(args.out, report.to_json_dict())
        print(render_report_table(report))
        if args.stats:
            with open(args.stats, "r", encoding="utf-8") as fh:
                stats = json.load(fh)
            print()
            print(render_text_histogram(stats.get("length_histogram", [])))
        return 0
    code, text = report_stats(args.run_dir, args.csv)
    print(text, file=sys.stderr if code else sys.stdout)
    return code


def cmd_run(args: argparse.Namespace) -> int:
    return run_pipeline(args.config, args.out_dir, seed=args.seed, threads=_threads(args))


def cmd_dpo_eval(args: argparse.Namespace) -> int:
    rows, errors = parse_jsonl(args.pairs, DpoLogProbs)
    for err in errors:
        print(f"warning: {args.pairs}: {err}", file=sys.stderr)
    result = dpo_batch_objective(rows, DpoParams(beta=args.beta, sft_loss_coef=args.coef))
    print(json.dumps(result, indent=2))
    return 0


def cmd_make_toy(args: argparse.Namespace) -> int:
    config = write_toy_workspace(args.out_dir, seed=args.seed, n_docs=args.docs)
    print(f"wrote toy workspace; run: redforge run --config {config} --out-dir <dir>")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redforge",
        description="Deterministic data pipeline for three-stage domain training: "
        "corpus filtering/packing, mixture search, SFT and preference dataset "
        "construction, and benchmark reporting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="rule + quality filtering with retention accounting")
    p.add_argument("--config", help="TOML config (uses [filter] section)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed-corpus", help="train the quality scorer on this corpus instead of rule survivors")
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("pack", help="group, segment, and pack documents into sequences")
    p.add_argument("--threshold", type=int, default=4096)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pack)

    p = sub.add_parser("mix", help="search for a data mixture over domain shards")
    p.add_argument("--domains", required=True, help="comma-separated name=path.jsonl pairs")
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--search", type=int, default=100000)
    p.add_argument("--top-k", type=int, default=32)
    p.add_argument("--prune-epsilon", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mix)

    p = sub.add_parser("build-sft", help="two-step SFT dataset construction")
    p.add_argument("--sns", required=True)
    p.add_argument("--general", required=True)
    p.add_argument("--r1", default="1:3", help="step-one sns:general ratio")
    p.add_argument("--r2", default="4:1", help="step-two sns:general ratio")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-replacement", action="store_true")
    p.add_argument("--out-step1", required=True)
    p.add_argument("--out-step2", required=True)
    p.add_argument("--stats", required=True)
    p.set_defaults(fn=cmd_build_sft)

    p = sub.add_parser("build-pref", help="preference-pair dataset construction")
    p.add_argument("--mc", required=True, help="task samples; multiple-choice ones feed ordinal pairs")
    p.add_argument("--pred-log")
    p.add_argument("--judged")
    p.add_argument("--calibration")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_build_pref)

    p = sub.add_parser("eval", help="score one prediction file")
    p.add_argument("--task", required=True)
    p.add_argument("--metric", required=True, choices=["accuracy", "span_f1", "bleu", "chrf_pp"])
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="aggregate scores, or summarize a pipeline run")
    p.add_argument("--scores", help="directory of score.json files to aggregate")
    p.add_argument("--out", help="write the aggregated report here")
    p.add_argument("--stats", help="stats.json whose token-length histogram is rendered")
    p.add_argument("--run-dir", help="pipeline output directory to summarize")
    p.add_argument("--csv", help="also write the run summary as CSV")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="run all stages end to end from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="cap worker counts (or env REDFORGE_THREADS)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("dpo-eval", help="batch mean preference objective from trainer log-probs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--coef", type=float, default=0.3)
    p.set_defaults(fn=cmd_dpo_eval)

    p = sub.add_parser("make-toy", help="generate the seeded toy workspace")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--docs", type=int, default=2000)
    p.set_defaults(fn=cmd_make_toy)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
