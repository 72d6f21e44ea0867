"""End-to-end pipeline runner: filter -> pack -> mix -> build-sft ->
build-pref -> eval, with per-stage manifests and atomic output promotion.

Each stage writes into a temp directory inside the output directory and its
files are promoted only on success, so a failed stage never leaves partial
outputs behind. A single global seed is fanned out per stage through stable
hashing, so any stage can be rerun independently with identical results.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import sys
import time
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .config import PipelineConfig, load_config
from .filtering import QualityScorer, apply_rule_filters, run_filter, train_quality_scorer
from .manifest import RunManifest, sha256_file, sha256_tree
from .metrics import (
    EvalScore,
    aggregate_report,
    bleu,
    chrf_pp,
    mc_accuracy,
    render_report_table,
    render_text_histogram,
    span_f1,
)
from .mixture import NgramMixtureProxy, run_mixture_search
from .packing import pack_corpus
from .preference import JudgeCalibration, build_pref_dataset
from .records import (
    CalibrationItem,
    Document,
    JudgedCandidate,
    ParseError,
    PredictionLogEntry,
    TaskSample,
    parse_jsonl,
    write_jsonl,
)
from .sft import corpus_stats, plan_two_step_mix, render_sample, validate_task_sample

STAGES = ("filter", "pack", "mix", "sft", "pref", "eval")
STAGE_EXIT_CODES = {"filter": 10, "pack": 20, "mix": 30, "sft": 40, "pref": 50, "eval": 60}

SUMMARY_FILES = (
    "filter_report.json",
    "pack_report.json",
    "mixture.json",
    "stats.json",
    "pref_report.json",
    "report.json",
)


class StageError(Exception):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def stage_seed(seed: int, stage: str) -> int:
    """Stable per-stage seed derived from the global seed."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _warn_parse_errors(path: str | Path, errors: Sequence[ParseError]) -> None:
    if errors:
        print(f"warning: {len(errors)} bad line(s) in {path}", file=sys.stderr)
        for err in errors[:5]:
            print(f"  {err}", file=sys.stderr)


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_output_lines(path: str | Path) -> list[str]:
    """Read an evaluation file of {"output": "..."} lines, in order."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_no}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("output"), str):
                raise ValueError(f"{path}: line {line_no}: expected an object with a string 'output'")
            out.append(obj["output"])
    return out


def score_task(task: str, metric: str, pred_path: str | Path, gold_path: str | Path) -> EvalScore:
    """Score one prediction file against its gold file with the named metric."""
    preds = read_output_lines(pred_path)
    golds = read_output_lines(gold_path)
    if metric == "accuracy":
        value = mc_accuracy(preds, golds)
    elif metric == "span_f1":
        value = _paired_mean(preds, golds, span_f1)
    elif metric == "bleu":
        value = bleu(preds, golds)
    elif metric == "chrf_pp":
        value = _paired_mean(preds, golds, chrf_pp)
    else:
        raise ValueError(f"unknown metric '{metric}'")
    return EvalScore(task, metric, value)


def _paired_mean(preds: Sequence[str], golds: Sequence[str], fn: Callable[[str, str], float]) -> float:
    if len(preds) != len(golds):
        raise ValueError("prediction and gold lists must have equal length")
    if not preds:
        raise ValueError("cannot score empty lists")
    return sum(fn(p, g) for p, g in zip(preds, golds)) / len(preds)


def filter_stage(cfg: PipelineConfig, corpus_path: str | Path, workspace: Path) -> list[str]:
    docs, errors = parse_jsonl(corpus_path, Document)
    _warn_parse_errors(corpus_path, errors)
    survivors = [d for d in docs if not apply_rule_filters(d, cfg.filter).rule_hits]
    if survivors:
        scorer = train_quality_scorer(survivors, cfg.filter.scorer_order, cfg.filter.smoothing_k)
    else:
        scorer = QualityScorer(cfg.filter.scorer_order, cfg.filter.smoothing_k)
    kept, rejected, report = run_filter(docs, cfg.filter, scorer)
    write_jsonl(workspace / "kept.jsonl", kept)
    write_jsonl(workspace / "rejected.jsonl", rejected)
    _write_json(workspace / "filter_report.json", report.to_json_dict())
    return ["kept.jsonl", "rejected.jsonl", "filter_report.json"]


def pack_stage(cfg: PipelineConfig, kept_path: Path, workspace: Path) -> list[str]:
    docs, errors = parse_jsonl(kept_path, Document)
    _warn_parse_errors(kept_path, errors)
    packed, groups, orphans = pack_corpus(docs, cfg.pack.threshold)
    write_jsonl(workspace / "packed.jsonl", packed)
    total_tokens = sum(seq.token_count for seq in packed)
    _write_json(
        workspace / "pack_report.json",
        {
            "sequences": len(packed),
            "total_tokens": total_tokens,
            "threshold": cfg.pack.threshold,
            "mean_fill": total_tokens / (len(packed) * cfg.pack.threshold) if packed else 0.0,
            "groups": len(groups),
            "orphans": len(orphans),
        },
    )
    return ["packed.jsonl", "pack_report.json"]


def mix_stage(cfg: PipelineConfig, kept_path: Path, seed: int, workspace: Path) -> list[str]:
    docs, errors = parse_jsonl(kept_path, Document)
    _warn_parse_errors(kept_path, errors)
    shards: dict[str, list[Document]] = {}
    for doc in docs:
        shards.setdefault(doc.domain, []).append(doc)
    if not shards:
        raise ValueError("no documents survived filtering; nothing to mix")
    proxy = NgramMixtureProxy(
        shards,
        order=cfg.filter.scorer_order,
        smoothing_k=cfg.filter.smoothing_k,
        held_out_fraction=cfg.mixture.held_out_fraction,
        max_positions=cfg.mixture.proxy_positions,
    )
    outcome = run_mixture_search(
        proxy,
        proxy.domains,
        n_samples=cfg.mixture.samples,
        alpha=cfg.mixture.alpha,
        seed=seed,
        n_search=cfg.mixture.search,
        top_k=cfg.mixture.top_k,
        prune_epsilon=cfg.mixture.prune_epsilon,
    )
    _write_json(workspace / "mixture.json", outcome.to_json_dict())
    return ["mixture.json"]


def _validate_pool(samples: Sequence[TaskSample], pool: str) -> None:
    table_checked = pool == "sns"
    problems = []
    for i, sample in enumerate(samples):
        for issue in validate_task_sample(sample):
            if not table_checked and issue.code in ("unknown_task", "capability_mismatch"):
                continue
            problems.append(f"{pool}[{i}] {issue.code}: {issue.message}")
    if problems:
        shown = "; ".join(problems[:5])
        raise ValueError(f"{len(problems)} invalid sample(s): {shown}")


def sft_stage(
    cfg: PipelineConfig, sns_path: Path, general_path: Path, seed: int, workspace: Path
) -> list[str]:
    sns, sns_errors = parse_jsonl(sns_path, TaskSample)
    _warn_parse_errors(sns_path, sns_errors)
    general, gen_errors = parse_jsonl(general_path, TaskSample)
    _warn_parse_errors(general_path, gen_errors)
    _validate_pool(sns, "sns")
    _validate_pool(general, "general")

    sns_ids = [f"sns-{i:06d}" for i in range(len(sns))]
    general_ids = [f"gen-{i:06d}" for i in range(len(general))]
    plan = plan_two_step_mix(
        sns_ids, general_ids, cfg.sft.r1, cfg.sft.r2, seed=seed,
        allow_replacement=cfg.sft.allow_replacement,
    )

    by_id = dict(zip(sns_ids, sns)) | dict(zip(general_ids, general))
    style = cfg.sft.template_style

    def materialize(manifest_ids: Sequence[str]) -> list[TaskSample]:
        return [by_id[i] for i in manifest_ids]

    step1 = materialize(plan.step1.sns_ids) + materialize(plan.step1.general_ids)
    step2 = materialize(plan.step2.sns_ids) + materialize(plan.step2.general_ids)
    write_jsonl(workspace / "sft_step1.jsonl", [render_sample(s, style) for s in step1])
    write_jsonl(workspace / "sft_step2.jsonl", [render_sample(s, style) for s in step2])
    stats = corpus_stats(step1, max_len=cfg.recipe.sft_seq_len, style=style)
    _write_json(workspace / "stats.json", stats.to_json_dict())
    _write_json(workspace / "sft_plan.json", plan.to_json_dict())
    _write_json(workspace / "recipe.json", cfg.recipe.to_json_dict())
    return ["sft_step1.jsonl", "sft_step2.jsonl", "stats.json", "sft_plan.json", "recipe.json"]


def pref_stage(
    cfg: PipelineConfig,
    sns_path: Path,
    log_path: Path | None,
    judged_path: Path | None,
    calibration_path: Path | None,
    workspace: Path,
) -> list[str]:
    sns, errors = parse_jsonl(sns_path, TaskSample)
    _warn_parse_errors(sns_path, errors)
    mc = [s for s in sns if s.format == "multiple_choice"]

    log: list[PredictionLogEntry] = []
    if log_path is not None:
        log, log_errors = parse_jsonl(log_path, PredictionLogEntry)
        _warn_parse_errors(log_path, log_errors)
    judged: list[JudgedCandidate] = []
    if judged_path is not None:
        judged, judged_errors = parse_jsonl(judged_path, JudgedCandidate)
        _warn_parse_errors(judged_path, judged_errors)
    calibration = None
    if calibration_path is not None:
        items, cal_errors = parse_jsonl(calibration_path, CalibrationItem)
        _warn_parse_errors(calibration_path, cal_errors)
        calibration = JudgeCalibration(tuple(items))

    pairs, report = build_pref_dataset(mc, log, judged, calibration, cfg.pref)
    write_jsonl(workspace / "pairs.jsonl", pairs)
    _write_json(workspace / "pref_report.json", report.to_json_dict())
    return ["pairs.jsonl", "pref_report.json"]


def eval_stage(cfg: PipelineConfig, workspace: Path) -> list[str]:
    eval_cfg = cfg.inputs.get("eval") or {}
    tasks = eval_cfg.get("tasks") or []
    if not tasks:
        raise ValueError("config has no [[eval.tasks]] entries")
    scores_dir = workspace / "scores"
    scores_dir.mkdir()
    scores = []
    for entry in tasks:
        score = score_task(entry["task"], entry["metric"], entry["pred"], entry["gold"])
        scores.append(score)
        slug = f"{score.task}_{score.metric}".lower().replace(" ", "_").replace("/", "-")
        _write_json(scores_dir / f"{slug}.json", score.to_json_dict())
    report = aggregate_report(scores)
    _write_json(workspace / "report.json", report.to_json_dict())
    return ["scores", "report.json"]


def _promote(workspace: Path, out_dir: Path, names: Sequence[str]) -> dict[str, str]:
    digests = {}
    for name in names:
        target = out_dir / name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        (workspace / name).replace(target)
        digests[name] = sha256_tree(target)
    return digests


def _input_path(cfg: PipelineConfig, key: str, stage: str, required: bool = True) -> Path | None:
    value = cfg.inputs.get(key)
    if value is None:
        if required:
            raise StageError(stage, f"config is missing io.{key}")
        return None
    path = Path(value)
    if not path.exists():
        raise StageError(stage, f"input file not found: {path}")
    return path


def run_pipeline(
    config_path: str | Path,
    out_dir: str | Path,
    seed: int | None = None,
    threads: int = 1,
) -> int:
    """Run all six stages in order; returns 0 or the failing stage's exit code.

    ``threads`` caps worker pools; all current stages are deterministic
    single-threaded reductions, so the value is recorded but unused.
    """
    config_path = Path(config_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        cfg = load_config(config_path)
    except (OSError, ValueError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 1
    effective_seed = cfg.seed if seed is None else seed
    config_hash = sha256_file(config_path)
    kept = out_dir / "kept.jsonl"

    def filter_fn(ws: Path) -> list[str]:
        return filter_stage(cfg, _require(cfg, "corpus", "filter"), ws)

    def pack_fn(ws: Path) -> list[str]:
        return pack_stage(cfg, kept, ws)

    def mix_fn(ws: Path) -> list[str]:
        return mix_stage(cfg, kept, stage_seed(effective_seed, "mix"), ws)

    def sft_fn(ws: Path) -> list[str]:
        return sft_stage(
            cfg,
            _require(cfg, "sns", "sft"),
            _require(cfg, "general", "sft"),
            stage_seed(effective_seed, "sft"),
            ws,
        )

    def pref_fn(ws: Path) -> list[str]:
        return pref_stage(
            cfg,
            _require(cfg, "sns", "pref"),
            _input_path(cfg, "pred_log", "pref", required=False),
            _input_path(cfg, "judged", "pref", required=False),
            _input_path(cfg, "calibration", "pref", required=False),
            ws,
        )

    def eval_fn(ws: Path) -> list[str]:
        return eval_stage(cfg, ws)

    def stage_input_files(stage: str) -> list[Path]:
        optional = [
            _optional(cfg, key) for key in ("pred_log", "judged", "calibration")
        ]
        table = {
            "filter": [_optional(cfg, "corpus")],
            "pack": [kept],
            "mix": [kept],
            "sft": [_optional(cfg, "sns"), _optional(cfg, "general")],
            "pref": [_optional(cfg, "sns"), *optional],
            "eval": [],
        }
        return [p for p in table[stage] if p is not None and p.exists()]

    runners = {
        "filter": filter_fn, "pack": pack_fn, "mix": mix_fn,
        "sft": sft_fn, "pref": pref_fn, "eval": eval_fn,
    }
    for stage in STAGES:
        t0 = time.perf_counter()
        workspace = out_dir / f".tmp-{stage}"
        if workspace.exists():
            shutil.rmtree(workspace)
        workspace.mkdir(parents=True)
        try:
            produced = runners[stage](workspace)
        except StageError as exc:
            shutil.rmtree(workspace, ignore_errors=True)
            print(f"error: {exc}", file=sys.stderr)
            return STAGE_EXIT_CODES[stage]
        except (OSError, ValueError, KeyError) as exc:
            shutil.rmtree(workspace, ignore_errors=True)
            print(f"error: [{stage}] {exc}", file=sys.stderr)
            return STAGE_EXIT_CODES[stage]
        outputs = _promote(workspace, out_dir, produced)
        shutil.rmtree(workspace, ignore_errors=True)
        manifest = RunManifest(
            stage=stage,
            command=f"redforge run --config {config_path} --out-dir {out_dir}",
            config_hash=config_hash,
            seed=stage_seed(effective_seed, stage),
            inputs={str(p): sha256_file(p) for p in stage_input_files(stage)},
            outputs=outputs,
            version=__version__,
            duration_s=round(time.perf_counter() - t0, 6),
        )
        manifest.write(out_dir / f"{stage}.manifest.json")
    return 0


def _require(cfg: PipelineConfig, key: str, stage: str) -> Path:
    path = _input_path(cfg, key, stage)
    assert path is not None
    return path


def _optional(cfg: PipelineConfig, key: str) -> Path | None:
    value = cfg.inputs.get(key)
    return Path(value) if value is not None else None


def report_stats(run_dir: str | Path, csv_path: str | Path | None = None) -> tuple[int, str]:
    """Six-section human-readable summary of a pipeline run's artifacts."""
    run_dir = Path(run_dir)
    missing = [name for name in SUMMARY_FILES if not (run_dir / name).exists()]
    if missing:
        return 1, "missing report file(s):\n" + "\n".join(f"  {run_dir / m}" for m in missing)

    def load(name: str) -> Any:
        with open(run_dir / name, "r", encoding="utf-8") as fh:
            return json.load(fh)

    filter_report = load("filter_report.json")
    pack_report = load("pack_report.json")
    mixture = load("mixture.json")
    stats = load("stats.json")
    pref_report = load("pref_report.json")
    report = load("report.json")

    lines = ["== Filter retention =="]
    lines.append(
        f"kept {filter_report['kept_docs']}/{filter_report['input_docs']} docs, "
        f"{filter_report['kept_tokens']}/{filter_report['input_tokens']} tokens "
        f"(retention {filter_report['retention']:.4f})"
    )
    lines.append("rule hits: " + ", ".join(f"{k}={v}" for k, v in filter_report["rule_hits"].items()))

    lines.append("")
    lines.append("== Packing ==")
    lines.append(
        f"{pack_report['sequences']} sequences of <= {pack_report['threshold']} tokens, "
        f"{pack_report['total_tokens']} tokens, mean fill {pack_report['mean_fill']:.3f}"
    )

    lines.append("")
    lines.append("== Mixture ==")
    for domain, weight in zip(mixture["domains"], mixture["weights"]):
        lines.append(f"  {domain}: {weight:.4f}")
    if mixture["dropped"]:
        lines.append("dropped: " + ", ".join(mixture["dropped"]))
    lines.append(f"predicted loss: {mixture['predicted_loss']:.6f}")

    lines.append("")
    lines.append("== SFT token lengths ==")
    tl = stats["token_length"]
    lines.append(
        f"{stats['n_samples']} samples, median {tl['median']}, p95 {tl['p95']}, "
        f"max {tl['max']}, clipped {tl['clipped']}"
    )
    lines.append(render_text_histogram(stats.get("length_histogram", [])))

    lines.append("")
    lines.append("== Preference pairs ==")
    lines.append(
        f"ordinal={pref_report['ordinal']} error={pref_report['error']} judge={pref_report['judge']} "
        f"(judge admitted: {pref_report['judge_admitted']}); unique={pref_report['unique_pairs']}"
    )

    lines.append("")
    lines.append("== Benchmark ==")
    scores = [EvalScore.from_json_dict(s) for s in report["scores"]]
    lines.append(render_report_table(aggregate_report(scores)))

    text = "\n".join(lines)
    if csv_path is not None:
        rows = [("section", "key", "value")]
        rows += [("filter", k, str(v)) for k, v in filter_report.items() if k != "rule_hits"]
        rows += [("filter", f"rule_hits.{k}", str(v)) for k, v in filter_report["rule_hits"].items()]
        rows += [("pack", k, str(v)) for k, v in pack_report.items()]
        rows += [("mixture", d, str(w)) for d, w in zip(mixture["domains"], mixture["weights"])]
        rows += [("mixture", "predicted_loss", str(mixture["predicted_loss"]))]
        rows += [("sft", k, str(v)) for k, v in tl.items()]
        rows += [("pref", k, str(v)) for k, v in pref_report.items()]
        rows += [("eval", f"{s.task}.{s.metric}", str(s.value)) for s in scores]
        with open(csv_path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(",".join('"' + c.replace('"', '""') + '"' for c in row))
                fh.write("\n")
    return 0, text
