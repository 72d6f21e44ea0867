"""Two-stage corpus filter: rule checks for local defects, then a character
n-gram language model for global quality, with retention accounting.

The quality stage keeps the best-scoring rule survivors until the kept token
total is as close as possible to ``retention_target`` of the input tokens.
The cut is a global two-pass percentile, not a streaming heuristic, so the
achieved retention is exact up to one document.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .config import FilterConfig
from .records import Document
from .tokenization import split_sentences

HTML_TAG_RE = re.compile(r"<[a-zA-Z!/][^>]*>")

RULE_NAMES = ("html", "repetition", "too_short", "too_long")

_UNK = 0
_BOS = -1


def repetition_ratio(text: str) -> float:
    """Fraction of sentences that are repeats of an earlier sentence.

    Sentences are split on ``.!?。！？`` and newline, whitespace-normalized
    before comparison. A text with no sentences has ratio 0.
    """
    sentences = split_sentences(text)
    if not sentences:
        return 0.0
    return 1.0 - len(set(sentences)) / len(sentences)


@dataclass(frozen=True)
class FilterVerdict:
    doc_id: str
    decision: str  # "keep" or "reject"
    rule_hits: tuple[str, ...]
    quality_score: float | None
    reason: str


def apply_rule_filters(doc: Document, cfg: FilterConfig) -> FilterVerdict:
    """Run every enabled rule and report all hits, not just the first."""
    hits = []
    if "html" in cfg.rules and HTML_TAG_RE.search(doc.text):
        hits.append("html")
    if "repetition" in cfg.rules and repetition_ratio(doc.text) > cfg.repetition_threshold:
        hits.append("repetition")
    if "too_short" in cfg.rules and doc.token_count < cfg.min_tokens:
        hits.append("too_short")
    if "too_long" in cfg.rules and doc.token_count > cfg.max_tokens:
        hits.append("too_long")
    if hits:
        return FilterVerdict(doc.id, "reject", tuple(hits), None, "rules: " + ",".join(hits))
    return FilterVerdict(doc.id, "keep", (), None, "ok")


class QualityScorer:
    """Add-k smoothed character n-gram language model.

    Characters are mapped to integer symbols from a sorted vocabulary, with
    0 reserved for unknowns, so two scorers trained on the same corpus in any
    order are structurally identical. Texts are padded with ``order - 1``
    start symbols so every character is scored.
    """

    def __init__(self, order: int = 2, smoothing_k: float = 1.0) -> None:
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing_k <= 0:
            raise ValueError("smoothing_k must be positive")
        self.order = order
        self.smoothing_k = smoothing_k
        self.vocab: dict[str, int] = {}
        self.counts: dict[tuple[int, ...], dict[int, int]] = {}
        self.context_totals: dict[tuple[int, ...], int] = {}

    @property
    def alphabet_size(self) -> int:
        # +1 for the unknown symbol
        return len(self.vocab) + 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QualityScorer):
            return NotImplemented
        return (
            self.order == other.order
            and self.smoothing_k == other.smoothing_k
            and self.vocab == other.vocab
            and self.counts == other.counts
        )

    def _symbols(self, text: str) -> list[int]:
        vocab = self.vocab
        return [_BOS] * (self.order - 1) + [vocab.get(ch, _UNK) for ch in text]

    def _train(self, texts: Sequence[str]) -> None:
        charset: set[str] = set()
        for text in texts:
            charset.update(text)
        self.vocab = {ch: i + 1 for i, ch in enumerate(sorted(charset))}
        for text in texts:
            syms = self._symbols(text)
            for i in range(self.order - 1, len(syms)):
                ctx = tuple(syms[i - self.order + 1 : i])
                target = syms[i]
                by_target = self.counts.setdefault(ctx, {})
                by_target[target] = by_target.get(target, 0) + 1
                self.context_totals[ctx] = self.context_totals.get(ctx, 0) + 1

    def log_prob(self, context: tuple[int, ...], symbol: int) -> float:
        k = self.smoothing_k
        count = self.counts.get(context, {}).get(symbol, 0)
        total = self.context_totals.get(context, 0)
        return math.log((count + k) / (total + k * self.alphabet_size))

    def score_text(self, text: str) -> float:
        """Negative per-character cross-entropy in nats; higher is more in-domain."""
        if not text:
            raise ValueError("cannot score empty text")
        syms = self._symbols(text)
        total = 0.0
        n = 0
        for i in range(self.order - 1, len(syms)):
            total += self.log_prob(tuple(syms[i - self.order + 1 : i]), syms[i])
            n += 1
        return total / n

    def perplexity(self, text: str) -> float:
        return math.exp(-self.score_text(text))


def train_quality_scorer(
    seed_corpus: Iterable[Document], order: int = 2, smoothing_k: float = 1.0
) -> QualityScorer:
    """Train the n-gram scorer on seed documents; count order never matters."""
    texts = [doc.text for doc in seed_corpus]
    if not texts:
        raise ValueError("seed corpus must be non-empty")
    scorer = QualityScorer(order=order, smoothing_k=smoothing_k)
    scorer._train(texts)
    return scorer


def quality_score(scorer: QualityScorer, doc: Document) -> float:
    return scorer.score_text(doc.text)


@dataclass
class FilterReport:
    input_docs: int = 0
    input_tokens: int = 0
    kept_docs: int = 0
    kept_tokens: int = 0
    retention: float = 0.0
    rule_hits: dict[str, int] = field(default_factory=lambda: {name: 0 for name in RULE_NAMES})

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "input_docs": self.input_docs,
            "input_tokens": self.input_tokens,
            "kept_docs": self.kept_docs,
            "kept_tokens": self.kept_tokens,
            "retention": self.retention,
            "rule_hits": dict(self.rule_hits),
        }


def run_filter(
    corpus: Sequence[Document], cfg: FilterConfig, scorer: QualityScorer
) -> tuple[list[Document], list[Document], FilterReport]:
    """Split a corpus into kept and rejected documents.

    Rule rejects go first. Among rule survivors, the best-scoring documents
    are kept so the kept token total lands as close as possible to
    ``cfg.retention_target`` of the input tokens. Both output lists preserve
    input order; reruns are byte-identical because nothing here is random.
    """
    report = FilterReport()
    report.input_docs = len(corpus)
    report.input_tokens = sum(doc.token_count for doc in corpus)

    survivor_idx: list[int] = []
    for i, doc in enumerate(corpus):
        verdict = apply_rule_filters(doc, cfg)
        if verdict.rule_hits:
            for hit in verdict.rule_hits:
                report.rule_hits[hit] += 1
        else:
            survivor_idx.append(i)

    scores = {
        i: (scorer.score_text(corpus[i].text) if corpus[i].text else -math.inf)
        for i in survivor_idx
    }
    ranked = sorted(survivor_idx, key=lambda i: (-scores[i], i))

    target = cfg.retention_target * report.input_tokens
    kept_set: set[int] = set()
    best_m, best_dist = 0, abs(0.0 - target)
    cumulative = 0
    for m, i in enumerate(ranked, start=1):
        cumulative += corpus[i].token_count
        dist = abs(cumulative - target)
        if dist < best_dist:
            best_m, best_dist = m, dist
    kept_set.update(ranked[:best_m])

    kept = [doc for i, doc in enumerate(corpus) if i in kept_set]
    rejected = [doc for i, doc in enumerate(corpus) if i not in kept_set]
    report.kept_docs = len(kept)
    report.kept_tokens = sum(doc.token_count for doc in kept)
    report.retention = report.kept_tokens / report.input_tokens if report.input_tokens else 0.0
    return kept, rejected, report
