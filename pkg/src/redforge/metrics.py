"""Benchmark metrics and report aggregation.

One fixed, documented configuration per metric: corpus BLEU uses n-gram
orders 1-4 with a 0.1 numerator floor on zero counts, chrF++ uses character
orders 1-6 plus word orders 1-2 with beta 2, and both tokenize with the
shared deterministic tokenizer. Scores live on the 0-100 scale to match the
usual results-table convention.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, Sequence

from .tokenization import tokenize

METRICS = frozenset({"accuracy", "span_f1", "bleu", "chrf_pp"})
SNS_METRICS = frozenset({"accuracy", "span_f1"})
TRANSLATION_METRICS = frozenset({"bleu", "chrf_pp"})

BLEU_MAX_ORDER = 4
BLEU_EPSILON = 0.1
CHRF_CHAR_ORDERS = 6
CHRF_WORD_ORDERS = 2
CHRF_BETA = 2.0

_WS_DELETE_RE = re.compile(r"\s+")


def mc_accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    """Percentage of exact matches."""
    if len(preds) != len(golds):
        raise ValueError("prediction and gold lists must have equal length")
    if not preds:
        raise ValueError("cannot score empty lists")
    matches = sum(1 for p, g in zip(preds, golds) if p == g)
    return 100.0 * matches / len(preds)


def span_f1(pred: str, gold: str) -> float:
    """Token-level F1 over multiset overlap, scaled to 0-100.

    Both sides empty scores 100; exactly one side empty scores 0. Symmetric
    in its arguments.
    """
    pred_tokens = Counter(tokenize(pred))
    gold_tokens = Counter(tokenize(gold))
    if not pred_tokens and not gold_tokens:
        return 100.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((pred_tokens & gold_tokens).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(pred_tokens.values())
    recall = overlap / sum(gold_tokens.values())
    return 100.0 * 2 * precision * recall / (precision + recall)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Sequence[str], refs: Sequence[str]) -> float:
    """Corpus BLEU with add-epsilon smoothing on zero numerators.

    Modified n-gram precisions for orders 1-4 are pooled over the corpus;
    orders with no hypothesis n-grams at all are skipped from the geometric
    mean. Brevity penalty exp(1 - ref_len/hyp_len) applies when the
    hypothesis side is shorter. An empty hypothesis corpus scores 0.
    """
    if len(hyps) != len(refs):
        raise ValueError("hypothesis and reference lists must have equal length")
    if not hyps:
        raise ValueError("cannot score empty lists")
    correct = [0] * BLEU_MAX_ORDER
    total = [0] * BLEU_MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens = tokenize(hyp)
        ref_tokens = tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, BLEU_MAX_ORDER + 1):
            hyp_ngrams = _ngram_counts(hyp_tokens, n)
            if not hyp_ngrams:
                continue
            ref_ngrams = _ngram_counts(ref_tokens, n)
            correct[n - 1] += sum((hyp_ngrams & ref_ngrams).values())
            total[n - 1] += sum(hyp_ngrams.values())
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(BLEU_MAX_ORDER):
        if total[n] == 0:
            continue
        numerator = correct[n] if correct[n] > 0 else BLEU_EPSILON
        log_sum += math.log(numerator / total[n])
        orders += 1
    if orders == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / orders)


def _f_beta(precision: float, recall: float, beta: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    beta_sq = beta * beta
    return (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)


def chrf_pp(hyp: str, ref: str) -> float:
    """chrF++: mean F2 over character orders 1-6 and word orders 1-2.

    Character n-grams are taken with whitespace removed. Orders where
    neither side has any n-grams are skipped; if every order is skipped the
    two sides are effectively empty and the score is 100.
    """
    hyp_chars = _WS_DELETE_RE.sub("", hyp)
    ref_chars = _WS_DELETE_RE.sub("", ref)
    hyp_words = tokenize(hyp)
    ref_words = tokenize(ref)

    f_scores = []
    sides = [(list(hyp_chars), list(ref_chars), CHRF_CHAR_ORDERS), (hyp_words, ref_words, CHRF_WORD_ORDERS)]
    for hyp_units, ref_units, max_order in sides:
        for n in range(1, max_order + 1):
            hyp_ngrams = _ngram_counts(hyp_units, n)
            ref_ngrams = _ngram_counts(ref_units, n)
            if not hyp_ngrams and not ref_ngrams:
                continue
            overlap = sum((hyp_ngrams & ref_ngrams).values())
            precision = overlap / sum(hyp_ngrams.values()) if hyp_ngrams else 0.0
            recall = overlap / sum(ref_ngrams.values()) if ref_ngrams else 0.0
            f_scores.append(_f_beta(precision, recall, CHRF_BETA))
    if not f_scores:
        return 100.0
    return 100.0 * sum(f_scores) / len(f_scores)


@dataclass(frozen=True)
class EvalScore:
    task: str
    metric: str
    value: float

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric '{self.metric}'")
        if not 0.0 <= self.value <= 100.0:
            raise ValueError("score must lie in [0, 100]")

    def to_json_dict(self) -> dict[str, Any]:
        return {"task": self.task, "metric": self.metric, "value": self.value}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EvalScore":
        for key in ("task", "metric"):
            if not isinstance(obj.get(key), str):
                raise ValueError(f"field '{key}' must be a string")
        value = obj.get("value")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("field 'value' must be a number")
        extra = set(obj) - {"task", "metric", "value"}
        if extra:
            raise ValueError(f"unknown field(s): {', '.join(sorted(extra))}")
        return cls(obj["task"], obj["metric"], float(value))


@dataclass(frozen=True)
class BenchmarkReport:
    scores: tuple[EvalScore, ...]
    sns_avg: float | None
    trans_avg: float | None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "scores": [s.to_json_dict() for s in self.scores],
            "sns_avg": self.sns_avg,
            "trans_avg": self.trans_avg,
        }


def aggregate_report(scores: Sequence[EvalScore]) -> BenchmarkReport:
    """Unweighted macro averages in the results-table layout.

    Accuracy and span-F1 scores feed the SNS average; BLEU and chrF++ feed
    the translation average. A repeated (task, metric) entry is an error.
    Averages are stored at full precision; rounding is a display concern.
    """
    seen: set[tuple[str, str]] = set()
    for score in scores:
        key = (score.task, score.metric)
        if key in seen:
            raise ValueError(f"duplicate score for task '{score.task}' metric '{score.metric}'")
        seen.add(key)
    sns = [s.value for s in scores if s.metric in SNS_METRICS]
    trans = [s.value for s in scores if s.metric in TRANSLATION_METRICS]
    return BenchmarkReport(
        scores=tuple(scores),
        sns_avg=sum(sns) / len(sns) if sns else None,
        trans_avg=sum(trans) / len(trans) if trans else None,
    )


def render_report_table(report: BenchmarkReport) -> str:
    """Plain-text table with 2-decimal display rounding."""
    lines = ["task                              metric    score", "-" * 50]
    for score in report.scores:
        lines.append(f"{score.task:<32}  {score.metric:<8}  {score.value:6.2f}")
    lines.append("-" * 50)
    if report.sns_avg is not None:
        lines.append(f"{'SNS average':<42}  {report.sns_avg:6.2f}")
    if report.trans_avg is not None:
        lines.append(f"{'Translation average':<42}  {report.trans_avg:6.2f}")
    return "\n".join(lines)


def render_text_histogram(buckets: Sequence[dict], width: int = 40) -> str:
    """ASCII histogram of token-length buckets (the report analog of a
    length-distribution plot)."""
    if not buckets:
        return "(no length data)"
    peak = max(b["count"] for b in buckets) or 1
    lines = []
    for b in buckets:
        bar = "#" * max(1, round(width * b["count"] / peak)) if b["count"] else ""
        lines.append(f"{b['lo']:>7}-{b['hi']:<7} |{bar} {b['count']}")
    return "\n".join(lines)
