"""Preference-pair construction and the preference-objective math.

Three pair strategies cover the data landscape: ordinal pairs mine the
correct-vs-distractor structure of multiple-choice items, error pairs turn
logged wrong predictions into (gold > prediction) pairs, and judge pairs
ingest judge-model picks but only after the judge clears a human-agreement
gate. The objective functions are pure scalar math for cross-checking
external trainers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Sequence

from .config import PrefConfig
from .records import (
    CalibrationItem,
    JudgedCandidate,
    PredictionLogEntry,
    PreferencePair,
    TaskSample,
    json_line,
)
from .tokenization import normalize_whitespace


def sample_source_id(sample: TaskSample) -> str:
    """Stable content-derived identifier for a task sample."""
    digest = hashlib.sha256(json_line(sample).encode("utf-8")).hexdigest()
    return f"mc-{digest[:12]}"


def ordinal_pairs(sample: TaskSample, source_id: str | None = None) -> list[PreferencePair]:
    """One (answer > distractor) pair per distinct distractor, in option order.

    Options whose text equals the answer are skipped, as are repeats of an
    already-emitted distractor, so a sample yields exactly
    (number of distinct options) - 1 pairs.
    """
    if sample.format != "multiple_choice":
        raise ValueError("ordinal pairs require a multiple_choice sample")
    sid = source_id if source_id is not None else sample_source_id(sample)
    pairs = []
    seen: set[str] = set()
    for option in sample.options or ():
        if option == sample.answer or option in seen:
            continue
        seen.add(option)
        pairs.append(PreferencePair(sample.prompt, sample.answer, option, "ordinal", sid))
    return pairs


def error_pairs(log: Sequence[PredictionLogEntry]) -> list[PreferencePair]:
    """(gold > prediction) pairs for every logged wrong prediction.

    Wrongness is exact string inequality after whitespace normalization;
    answers differing only in surrounding or internal spacing emit nothing.
    """
    pairs = []
    for entry in log:
        if normalize_whitespace(entry.predicted) != normalize_whitespace(entry.gold):
            pairs.append(
                PreferencePair(entry.prompt, entry.gold, entry.predicted, "error", entry.source_id)
            )
    return pairs


def judge_pairs(judged: Sequence[JudgedCandidate]) -> list[PreferencePair]:
    """Pairs from judge-preferred responses; identical response pairs are skipped."""
    pairs = []
    for candidate in judged:
        if candidate.response_a == candidate.response_b:
            continue
        chosen, rejected = (
            (candidate.response_a, candidate.response_b)
            if candidate.preferred == "A"
            else (candidate.response_b, candidate.response_a)
        )
        pairs.append(PreferencePair(candidate.prompt, chosen, rejected, "judge", candidate.source_id))
    return pairs


@dataclass(frozen=True)
class JudgeCalibration:
    items: tuple[CalibrationItem, ...]

    @property
    def agreement(self) -> float:
        if not self.items:
            raise ValueError("calibration requires at least one item")
        matches = sum(1 for item in self.items if item.judge_preference == item.human_preference)
        return matches / len(self.items)


def judge_gate(calibration: JudgeCalibration, tau: float = 0.8) -> bool:
    """Admit the judge strategy iff judge-human agreement reaches tau."""
    return calibration.agreement >= tau


@dataclass(frozen=True)
class DpoParams:
    beta: float = 0.1
    sft_loss_coef: float = 0.3

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.sft_loss_coef < 0:
            raise ValueError("sft_loss_coef must be non-negative")


def _softplus(x: float) -> float:
    # max(x, 0) + log1p(exp(-|x|)) never overflows
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def dpo_loss(
    policy_lp_chosen: float,
    policy_lp_rejected: float,
    ref_lp_chosen: float,
    ref_lp_rejected: float,
    beta: float = 0.1,
) -> float:
    """-log sigmoid(beta * (policy margin - reference margin)).

    Strictly positive, strictly decreasing in the policy margin, and invariant
    to shifting both log-probs of either model by a constant.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    values = (policy_lp_chosen, policy_lp_rejected, ref_lp_chosen, ref_lp_rejected)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("log-probabilities must be finite")
    margin = (policy_lp_chosen - policy_lp_rejected) - (ref_lp_chosen - ref_lp_rejected)
    return _softplus(-beta * margin)


def combined_objective(dpo: float, sft_nll: float, coef: float = 0.3) -> float:
    """Preference loss plus coef times the supervised NLL."""
    if sft_nll < 0:
        raise ValueError("sft_nll must be non-negative")
    if coef < 0:
        raise ValueError("coef must be non-negative")
    return dpo + coef * sft_nll


@dataclass(frozen=True)
class DpoLogProbs:
    """One row of trainer log-probabilities for objective cross-checks."""

    policy_lp_chosen: float
    policy_lp_rejected: float
    ref_lp_chosen: float
    ref_lp_rejected: float
    sft_nll: float = 0.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "policy_lp_chosen": self.policy_lp_chosen,
            "policy_lp_rejected": self.policy_lp_rejected,
            "ref_lp_chosen": self.ref_lp_chosen,
            "ref_lp_rejected": self.ref_lp_rejected,
            "sft_nll": self.sft_nll,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DpoLogProbs":
        required = ("policy_lp_chosen", "policy_lp_rejected", "ref_lp_chosen", "ref_lp_rejected")
        missing = [k for k in required if k not in obj]
        if missing:
            raise ValueError(f"missing field(s): {', '.join(missing)}")
        unknown = set(obj) - set(required) - {"sft_nll"}
        if unknown:
            raise ValueError(f"unknown field(s): {', '.join(sorted(unknown))}")
        values = {}
        for key in (*required, "sft_nll"):
            value = obj.get(key, 0.0)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"field '{key}' must be a number")
            values[key] = float(value)
        return cls(**values)


def dpo_batch_objective(rows: Sequence[DpoLogProbs], params: DpoParams) -> dict[str, float]:
    """Mean preference loss and combined objective over a batch of rows."""
    if not rows:
        raise ValueError("batch must be non-empty")
    losses = [
        dpo_loss(r.policy_lp_chosen, r.policy_lp_rejected, r.ref_lp_chosen, r.ref_lp_rejected, params.beta)
        for r in rows
    ]
    objectives = [
        combined_objective(loss, r.sft_nll, params.sft_loss_coef) for loss, r in zip(losses, rows)
    ]
    return {
        "n": len(rows),
        "beta": params.beta,
        "sft_loss_coef": params.sft_loss_coef,
        "mean_dpo_loss": sum(losses) / len(losses),
        "mean_sft_nll": sum(r.sft_nll for r in rows) / len(rows),
        "mean_objective": sum(objectives) / len(objectives),
    }


@dataclass
class PrefReport:
    ordinal: int = 0
    error: int = 0
    judge: int = 0
    judge_candidates: int = 0
    judge_admitted: bool = False
    unique_pairs: int = 0
    duplicates_removed: int = 0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "ordinal": self.ordinal,
            "error": self.error,
            "judge": self.judge,
            "judge_candidates": self.judge_candidates,
            "judge_admitted": self.judge_admitted,
            "unique_pairs": self.unique_pairs,
            "duplicates_removed": self.duplicates_removed,
        }


def build_pref_dataset(
    mc_samples: Sequence[TaskSample],
    log: Sequence[PredictionLogEntry],
    judged: Sequence[JudgedCandidate],
    calibration: JudgeCalibration | None,
    cfg: PrefConfig,
) -> tuple[list[PreferencePair], PrefReport]:
    """Union of the three strategies, deduplicated on (prompt, chosen, rejected).

    Judge candidates are admitted only when the calibration clears tau;
    below the gate they are dropped entirely. Per-strategy counts in the
    report are pre-dedup emissions, so a pair produced by two strategies is
    counted under both but appears once in the output.
    """
    report = PrefReport()
    emitted: list[PreferencePair] = []
    for sample in mc_samples:
        if sample.format != "multiple_choice":
            continue
        pairs = ordinal_pairs(sample)
        report.ordinal += len(pairs)
        emitted.extend(pairs)
    pairs = error_pairs(log)
    report.error += len(pairs)
    emitted.extend(pairs)

    report.judge_candidates = len(judged)
    if judged:
        if calibration is None:
            raise ValueError("judge candidates supplied without calibration data")
        report.judge_admitted = judge_gate(calibration, cfg.tau)
        if report.judge_admitted:
            pairs = judge_pairs(judged)
            report.judge += len(pairs)
            emitted.extend(pairs)

    unique: list[PreferencePair] = []
    seen: set[tuple[str, str, str]] = set()
    for pair in emitted:
        key = (pair.prompt, pair.chosen, pair.rejected)
        if key in seen:
            continue
        seen.add(key)
        unique.append(pair)
    report.unique_pairs = len(unique)
    report.duplicates_removed = len(emitted) - len(unique)
    return unique, report
