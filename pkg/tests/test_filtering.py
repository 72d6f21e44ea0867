import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from redforge.config import FilterConfig
from redforge.filtering import (
    QualityScorer,
    apply_rule_filters,
    quality_score,
    repetition_ratio,
    run_filter,
    train_quality_scorer,
)
from redforge.records import Document


def doc(text, i=0, **kwargs):
    defaults = dict(id=f"d{i}", source="general", domain="web")
    defaults.update(kwargs)
    return Document(text=text, **defaults)


class TestRepetitionRatio:
    def test_all_unique(self):
        assert repetition_ratio("a. b. c.") == 0.0

    def test_one_sentence_repeated_five_times(self):
        assert repetition_ratio("the same line. " * 5) == pytest.approx(0.8)

    def test_partial_repeats(self):
        assert repetition_ratio("x. y. x. z.") == pytest.approx(0.25)

    def test_no_sentences(self):
        assert repetition_ratio("") == 0.0
        assert repetition_ratio("   \t ") == 0.0

    def test_whitespace_normalized_before_comparison(self):
        assert repetition_ratio("a  b. a b.") == pytest.approx(0.5)

    @given(st.lists(st.text(st.characters(whitelist_categories=["Ll"]), min_size=1, max_size=8),
                    min_size=1, max_size=10))
    def test_self_concatenation_at_least_half(self, sentences):
        text = ". ".join(sentences) + "."
        assert repetition_ratio(text + " " + text) >= 0.5


class TestRuleFilters:
    def test_html_tag_rejected(self):
        text = "clean words here <div> more clean words here to pass the length rule"
        verdict = apply_rule_filters(doc(text), FilterConfig())
        assert verdict.decision == "reject"
        assert verdict.rule_hits == ("html",)

    def test_short_text_rejected(self):
        verdict = apply_rule_filters(doc("five tokens of clean text"), FilterConfig(min_tokens=10))
        assert verdict.rule_hits == ("too_short",)

    def test_clean_text_kept(self):
        text = " ".join(f"word{i} item" for i in range(25))
        verdict = apply_rule_filters(doc(text), FilterConfig())
        assert verdict.decision == "keep" and verdict.rule_hits == ()

    def test_all_hits_listed(self):
        verdict = apply_rule_filters(doc("<b>tiny</b>"), FilterConfig(min_tokens=10))
        assert set(verdict.rule_hits) == {"html", "too_short"}

    def test_too_long(self):
        verdict = apply_rule_filters(doc("w " * 30, i=1), FilterConfig(min_tokens=1, max_tokens=20))
        assert verdict.rule_hits == ("too_long",)

    def test_disabled_rules_do_not_fire(self):
        cfg = FilterConfig(rules=("repetition",))
        verdict = apply_rule_filters(doc("<div> hi"), cfg)
        assert verdict.decision == "keep"


class TestQualityScorer:
    def test_hand_computed_bigram_table(self):
        # "ab ab ab": transitions a->b x3, b->space x2, space->a x2, BOS->a x1.
        # Vocab {a, b, space} + unknown gives alphabet 4; add-1 smoothing:
        # P(b|a) = (3+1)/(3+4) = 4/7 and it is the largest transition.
        scorer = train_quality_scorer([doc("ab ab ab")], order=2, smoothing_k=1.0)
        p_b_given_a = math.exp(scorer.log_prob((scorer.vocab["a"],), scorer.vocab["b"]))
        assert p_b_given_a == pytest.approx(4 / 7)
        others = [
            math.exp(scorer.log_prob((scorer.vocab["b"],), scorer.vocab[" "])),
            math.exp(scorer.log_prob((scorer.vocab[" "],), scorer.vocab["a"])),
        ]
        assert all(p_b_given_a > p for p in others)

    def test_training_is_order_invariant(self):
        docs = [doc("abc abc", 1), doc("xyz xyz", 2), doc("mor words", 3)]
        assert train_quality_scorer(docs) == train_quality_scorer(docs[::-1])

    def test_order_zero_rejected(self):
        with pytest.raises(ValueError):
            train_quality_scorer([doc("ab")], order=0)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_quality_scorer([])

    def test_in_domain_scores_higher(self):
        scorer = train_quality_scorer([doc("ab ab ab")], order=2)
        assert scorer.score_text("ab") > scorer.score_text("zq")

    def test_score_deterministic(self):
        scorer = train_quality_scorer([doc("ab ab ab")], order=2)
        assert scorer.score_text("ab") == scorer.score_text("ab")

    def test_empty_text_rejected(self):
        scorer = train_quality_scorer([doc("ab")], order=2)
        with pytest.raises(ValueError):
            scorer.score_text("")

    def test_perplexity_finite_and_above_one(self):
        scorer = train_quality_scorer([doc("ab ab ab")], order=2)
        for text in ("ab", "zq", "a", "你好"):
            assert 1.0 < scorer.perplexity(text) < math.inf

    def test_seed_text_beats_character_permutations(self):
        # brute-force fixture: the training text itself scores at least as
        # high as seeded shuffles of its characters
        seed_text = "the quick brown fox jumps over the lazy dog again and again"
        scorer = train_quality_scorer([doc(seed_text)], order=2)
        base = scorer.score_text(seed_text)
        rng = random.Random(13)
        for _ in range(20):
            chars = list(seed_text)
            rng.shuffle(chars)
            assert base >= scorer.score_text("".join(chars))

    def test_quality_score_wrapper(self):
        scorer = train_quality_scorer([doc("ab ab ab")], order=2)
        d = doc("ab", 5)
        assert quality_score(scorer, d) == scorer.score_text("ab")


def clean_corpus(n, tokens_per_doc=40):
    rng = random.Random(41)
    docs = []
    for i in range(n):
        words = [f"w{rng.randrange(400)}" for _ in range(tokens_per_doc - 1)]
        docs.append(doc(" ".join(words) + f" u{i}.", i))
    return docs


class TestRunFilter:
    def test_html_rejects_counted(self):
        docs = clean_corpus(7)
        docs += [doc("some text <div> with tags " + " ".join(f"x{j}" for j in range(20)), 100 + i)
                 for i in range(3)]
        cfg = FilterConfig(retention_target=1.0)
        scorer = train_quality_scorer(docs[:7])
        kept, rejected, report = run_filter(docs, cfg, scorer)
        assert len(kept) <= 7
        assert report.rule_hits["html"] == 3

    def test_retention_one_keeps_all_clean(self):
        docs = clean_corpus(10)
        cfg = FilterConfig(retention_target=1.0)
        kept, rejected, report = run_filter(docs, cfg, train_quality_scorer(docs))
        assert kept == docs and rejected == []
        assert report.retention == pytest.approx(1.0)

    def test_partition_and_order(self):
        docs = clean_corpus(30)
        cfg = FilterConfig(retention_target=0.5)
        kept, rejected, report = run_filter(docs, cfg, train_quality_scorer(docs))
        assert len(kept) + len(rejected) == len(docs)
        merged = sorted(kept + rejected, key=lambda d: d.id)
        assert merged == sorted(docs, key=lambda d: d.id)
        # both streams preserve input order
        positions = {d.id: i for i, d in enumerate(docs)}
        assert [positions[d.id] for d in kept] == sorted(positions[d.id] for d in kept)
        assert [positions[d.id] for d in rejected] == sorted(positions[d.id] for d in rejected)

    def test_retention_within_one_max_document(self):
        docs = clean_corpus(200)
        cfg = FilterConfig(retention_target=0.2)
        kept, _, report = run_filter(docs, cfg, train_quality_scorer(docs))
        total = report.input_tokens
        delta = max(d.token_count for d in docs) / total
        assert abs(report.retention - 0.2) <= delta

    def test_deterministic_rerun(self):
        docs = clean_corpus(50)
        cfg = FilterConfig(retention_target=0.3)
        scorer = train_quality_scorer(docs)
        first = run_filter(docs, cfg, scorer)
        second = run_filter(docs, cfg, scorer)
        assert [d.id for d in first[0]] == [d.id for d in second[0]]
        assert first[2].to_json_dict() == second[2].to_json_dict()

    def test_all_rejected_degenerate(self):
        docs = [doc("<p> tiny", i) for i in range(4)]
        cfg = FilterConfig()
        kept, rejected, report = run_filter(docs, cfg, QualityScorer())
        assert kept == [] and len(rejected) == 4
        assert report.kept_tokens == 0

    def test_report_fields(self):
        docs = clean_corpus(5)
        _, _, report = run_filter(docs, FilterConfig(retention_target=1.0), train_quality_scorer(docs))
        payload = report.to_json_dict()
        assert set(payload) == {
            "input_docs", "input_tokens", "kept_docs", "kept_tokens", "retention", "rule_hits",
        }
        assert set(payload["rule_hits"]) == {"html", "repetition", "too_short", "too_long"}
