"""SFT instruction-dataset construction: task-schema validation, the three
instruction formats, two-step domain/general mixing, and corpus statistics."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .config import parse_ratio, sns_share
from .records import TaskSample
from .tokenization import count_tokens

# The twelve tasks and the capability each one exercises.
DEFAULT_TASK_MAP: dict[str, str] = {
    "Note Taxonomy": "content_understanding",
    "Query Classification": "content_understanding",
    "Query Intent Recognition": "content_understanding",
    "Hashtag Prediction": "information_extraction",
    "Machine Reading Comprehension": "information_extraction",
    "Highlight Word Detection": "information_extraction",
    "Query-Note Relevance": "semantic_matching",
    "Query-Note Retrieval": "semantic_matching",
    "Post-View Search": "user_behavior_modeling",
    "Emotional Companion Dialogue": "dialogue",
    "Role-playing Dialogue": "dialogue",
    "SNS Domain Translation": "translation",
}

MAX_OPTIONS = len(string.ascii_uppercase)


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


def validate_task_sample(
    sample: TaskSample, task_map: Mapping[str, str] | None = None
) -> list[ValidationIssue]:
    """Check a sample against the task table; empty result means valid.

    The task-to-capability map defaults to the twelve built-in tasks and is
    config-extensible. Structural format invariants are enforced by the
    TaskSample type itself; this adds the table-membership checks plus the
    constraints rendering relies on.
    """
    task_map = DEFAULT_TASK_MAP if task_map is None else task_map
    issues = []
    expected = task_map.get(sample.task)
    if expected is None:
        issues.append(ValidationIssue("unknown_task", f"task '{sample.task}' is not in the task table"))
    elif sample.capability != expected:
        issues.append(
            ValidationIssue(
                "capability_mismatch",
                f"task '{sample.task}' expects capability '{expected}', got '{sample.capability}'",
            )
        )
    if not sample.answer.strip():
        issues.append(ValidationIssue("empty_answer", "answer must be non-empty"))
    if sample.options is not None and len(sample.options) > MAX_OPTIONS:
        issues.append(
            ValidationIssue("too_many_options", f"at most {MAX_OPTIONS} options are renderable")
        )
    return issues


TEMPLATE_STYLES: dict[str, dict[str, str]] = {
    "default": {
        "multiple_choice": "{task}: choose the best option and answer with its letter.",
        "extraction": "{task}: extract the answer span from the input.",
        "generation": "{task}: write the response.",
    },
}


@dataclass(frozen=True)
class InstructionRecord:
    instruction: str
    input: str
    output: str

    def to_json_dict(self) -> dict[str, Any]:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "InstructionRecord":
        for key in ("instruction", "input", "output"):
            if not isinstance(obj.get(key), str):
                raise ValueError(f"field '{key}' must be a string")
        extra = set(obj) - {"instruction", "input", "output"}
        if extra:
            raise ValueError(f"unknown field(s): {', '.join(sorted(extra))}")
        return cls(obj["instruction"], obj["input"], obj["output"])

    @property
    def token_length(self) -> int:
        return count_tokens(self.instruction) + count_tokens(self.input) + count_tokens(self.output)


def render_sample(sample: TaskSample, style: str = "default") -> InstructionRecord:
    """Render a sample into an {instruction, input, output} record.

    Multiple choice labels options A., B., ... in order and the output is the
    answer's letter (first match when options repeat); extraction and
    generation emit the answer verbatim, so the original answer is always
    recoverable from the record.
    """
    templates = TEMPLATE_STYLES.get(style)
    if templates is None:
        raise ValueError(f"unknown template style '{style}'")
    if not sample.answer:
        raise ValueError("cannot render a sample with an empty answer")
    instruction = templates[sample.format].format(task=sample.task)
    if sample.format == "multiple_choice":
        options = sample.options or ()
        if len(options) > MAX_OPTIONS:
            raise ValueError(f"at most {MAX_OPTIONS} options are renderable")
        letters = string.ascii_uppercase
        block = "\n".join(f"{letters[i]}. {text}" for i, text in enumerate(options))
        answer_letter = letters[options.index(sample.answer)]
        return InstructionRecord(instruction, f"{sample.prompt}\n{block}", answer_letter)
    return InstructionRecord(instruction, sample.prompt, sample.answer)


@dataclass(frozen=True)
class StepManifest:
    sns_ids: tuple[str, ...]
    general_ids: tuple[str, ...]

    @property
    def counts(self) -> dict[str, int]:
        return {"sns": len(self.sns_ids), "general": len(self.general_ids)}

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "sns_count": len(self.sns_ids),
            "general_count": len(self.general_ids),
            "sns_ids": list(self.sns_ids),
            "general_ids": list(self.general_ids),
        }


@dataclass(frozen=True)
class TwoStepPlan:
    step1: StepManifest
    step2: StepManifest
    ratios: tuple[str, str]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "ratios": {"step1": self.ratios[0], "step2": self.ratios[1]},
            "step1": self.step1.to_json_dict(),
            "step2": self.step2.to_json_dict(),
        }


def plan_two_step_mix(
    sns_ids: Sequence[str],
    general_ids: Sequence[str],
    r1: str = "1:3",
    r2: str = "4:1",
    seed: int = 0,
    allow_replacement: bool = False,
) -> TwoStepPlan:
    """Plan the two training steps: all SNS data in both, general data scaled
    by the sns:general ratios (step two must be the more SNS-heavy one).

    General samples are drawn without replacement, independently per step,
    from per-step RNG streams, so two plans with the same seed are identical
    and different seeds change only the general portions.
    """
    ratio1, ratio2 = parse_ratio(r1), parse_ratio(r2)
    if sns_share(ratio2) <= sns_share(ratio1):
        raise ValueError("step-two ratio must carry a strictly higher SNS share than step one")

    def draw(step: int, ratio: tuple[int, int]) -> tuple[str, ...]:
        need = len(sns_ids) * ratio[1] // ratio[0]
        if need > len(general_ids) and not allow_replacement:
            raise ValueError(
                f"step {step} needs {need} general samples but the pool has {len(general_ids)}"
            )
        rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, step))
        idx = rng.choice(len(general_ids), size=need, replace=need > len(general_ids))
        return tuple(general_ids[i] for i in idx)

    sns = tuple(sns_ids)
    return TwoStepPlan(
        StepManifest(sns, draw(1, ratio1)),
        StepManifest(sns, draw(2, ratio2)),
        (r1, r2),
    )


@dataclass
class CorpusStats:
    n_samples: int
    median: int
    p95: int
    max: int
    clipped: int
    per_capability: dict[str, int]
    per_task: dict[str, int]
    label_histogram: dict[str, dict[str, int]]
    length_histogram: list[tuple[int, int, int]] = field(default_factory=list)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "token_length": {
                "median": self.median,
                "p95": self.p95,
                "max": self.max,
                "clipped": self.clipped,
            },
            "per_capability": dict(sorted(self.per_capability.items())),
            "per_task": dict(sorted(self.per_task.items())),
            "label_histogram": {
                level: dict(sorted(hist.items())) for level, hist in self.label_histogram.items()
            },
            "length_histogram": [
                {"lo": lo, "hi": hi, "count": count} for lo, hi, count in self.length_histogram
            ],
        }


def nearest_rank(sorted_values: Sequence[int], q: float) -> int:
    """Nearest-rank percentile: the value at 1-based index ceil(q * N).

    The rank is computed with exact fractions so float drift (e.g. 0.95 * 100)
    can never shift it off by one.
    """
    n = len(sorted_values)
    if n == 0:
        raise ValueError("cannot take a percentile of an empty sequence")
    fraction = Fraction(q).limit_denominator(1_000_000)
    rank = min(n, max(1, math.ceil(fraction * n)))
    return sorted_values[rank - 1]


def corpus_stats(
    samples: Iterable[TaskSample], max_len: int = 16384, style: str = "default"
) -> CorpusStats:
    """Token-length and composition statistics over rendered samples.

    Lengths come from rendering each sample and counting tokens; values above
    ``max_len`` are included in the distribution but counted as clipped.
    Percentiles use the nearest-rank rule, so results are exact integers with
    no interpolation ambiguity.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot compute statistics over an empty stream")
    lengths = sorted(render_sample(s, style).token_length for s in samples)
    per_capability: dict[str, int] = {}
    per_task: dict[str, int] = {}
    label_histogram: dict[str, dict[str, int]] = {"primary": {}, "secondary": {}}
    for s in samples:
        per_capability[s.capability] = per_capability.get(s.capability, 0) + 1
        per_task[s.task] = per_task.get(s.task, 0) + 1
        if s.labels is not None:
            for level, value in (("primary", s.labels.primary), ("secondary", s.labels.secondary)):
                if value is not None:
                    label_histogram[level][value] = label_histogram[level].get(value, 0) + 1
    return CorpusStats(
        n_samples=len(samples),
        median=nearest_rank(lengths, 0.5),
        p95=nearest_rank(lengths, 0.95),
        max=lengths[-1],
        clipped=sum(1 for length in lengths if length > max_len),
        per_capability=per_capability,
        per_task=per_task,
        label_histogram=label_histogram,
        length_histogram=_length_histogram(lengths),
    )


def _length_histogram(sorted_lengths: Sequence[int]) -> list[tuple[int, int, int]]:
    """Power-of-two length buckets for the plain-text distribution plot."""
    buckets: list[tuple[int, int, int]] = []
    lo = 1
    remaining = [length for length in sorted_lengths if length >= 1]
    zero = len(sorted_lengths) - len(remaining)
    if zero:
        buckets.append((0, 0, zero))
    while remaining:
        hi = lo * 2 - 1
        inside = [length for length in remaining if lo <= length <= hi]
        if inside:
            buckets.append((lo, hi, len(inside)))
        remaining = [length for length in remaining if length > hi]
        lo *= 2
    return buckets
