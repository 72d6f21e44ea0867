"""Record types and canonical JSONL (de)serialization.

All records are immutable values. Serialization uses a fixed field order and
compact separators so that equal records always produce identical bytes,
which makes pipeline outputs diffable and reruns byte-comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Type, TypeVar

from .tokenization import count_tokens

SOURCES = frozenset({"general", "sns"})
CAPABILITIES = frozenset(
    {
        "content_understanding",
        "information_extraction",
        "semantic_matching",
        "user_behavior_modeling",
        "dialogue",
        "translation",
    }
)
FORMATS = frozenset({"multiple_choice", "extraction", "generation"})
STRATEGIES = frozenset({"judge", "ordinal", "error"})
PREFERENCE_SIDES = frozenset({"A", "B"})


@dataclass(frozen=True)
class ParseError:
    line_no: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.message}"


def _check_str(obj: dict, key: str, allow_empty: bool = True) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise ValueError(f"field '{key}' must be a string")
    if not allow_empty and not value:
        raise ValueError(f"field '{key}' must be non-empty")
    return value


def _check_keys(obj: dict, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> None:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    unknown = [k for k in obj if k not in required and k not in optional]
    if unknown:
        raise ValueError(f"unknown field(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class InteractionMeta:
    """User-interaction metadata attached to an SNS document."""

    parent_id: str | None = None
    likes: int = 0

    def __post_init__(self) -> None:
        if self.parent_id is not None and not self.parent_id:
            raise ValueError("parent_id must be None or non-empty")
        if not isinstance(self.likes, int) or self.likes < 0:
            raise ValueError("likes must be a non-negative integer")

    def to_json_dict(self) -> dict[str, Any]:
        return {"parent_id": self.parent_id, "likes": self.likes}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "InteractionMeta":
        _check_keys(obj, required=("likes",), optional=("parent_id",))
        parent_id = obj.get("parent_id")
        if parent_id is not None and not isinstance(parent_id, str):
            raise ValueError("field 'parent_id' must be a string or null")
        likes = obj["likes"]
        if isinstance(likes, bool) or not isinstance(likes, int):
            raise ValueError("field 'likes' must be an integer")
        return cls(parent_id=parent_id, likes=likes)


@dataclass(frozen=True)
class Document:
    """One corpus record: text plus source/domain tags and interaction metadata."""

    id: str
    source: str
    domain: str
    text: str
    interactions: InteractionMeta | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source '{self.source}'")
        if self.source == "general" and self.interactions is not None:
            raise ValueError("general documents must not carry interactions")

    @cached_property
    def token_count(self) -> int:
        return count_tokens(self.text)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source,
            "domain": self.domain,
            "text": self.text,
            "interactions": self.interactions.to_json_dict() if self.interactions else None,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Document":
        _check_keys(obj, required=("id", "source", "domain", "text"), optional=("interactions",))
        interactions_obj = obj.get("interactions")
        interactions = None
        if interactions_obj is not None:
            interactions = InteractionMeta.from_json_dict(interactions_obj)
        return cls(
            id=_check_str(obj, "id", allow_empty=False),
            source=_check_str(obj, "source"),
            domain=_check_str(obj, "domain"),
            text=_check_str(obj, "text"),
            interactions=interactions,
        )


@dataclass(frozen=True)
class CategoryLabels:
    """Optional primary/secondary category labels produced by an external labeler."""

    primary: str | None = None
    secondary: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {"primary": self.primary, "secondary": self.secondary}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CategoryLabels":
        _check_keys(obj, required=(), optional=("primary", "secondary"))
        for key in ("primary", "secondary"):
            value = obj.get(key)
            if value is not None and not isinstance(value, str):
                raise ValueError(f"field '{key}' must be a string or null")
        return cls(primary=obj.get("primary"), secondary=obj.get("secondary"))


@dataclass(frozen=True)
class TaskSample:
    """One SFT instance in one of the three instruction formats."""

    task: str
    capability: str
    format: str
    prompt: str
    answer: str
    options: tuple[str, ...] | None = None
    labels: CategoryLabels | None = None

    def __post_init__(self) -> None:
        if self.capability not in CAPABILITIES:
            raise ValueError(f"unknown capability '{self.capability}'")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format '{self.format}'")
        if self.format == "multiple_choice":
            if self.options is None or len(self.options) < 2:
                raise ValueError("multiple_choice requires at least 2 options")
            if self.answer not in self.options:
                raise ValueError("multiple_choice answer must be one of the options")
        elif self.options is not None:
            raise ValueError(f"format '{self.format}' must not carry options")

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "task": self.task,
            "capability": self.capability,
            "format": self.format,
            "prompt": self.prompt,
            "options": list(self.options) if self.options is not None else None,
            "answer": self.answer,
        }
        if self.labels is not None:
            out["labels"] = self.labels.to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TaskSample":
        _check_keys(
            obj,
            required=("task", "capability", "format", "prompt", "answer"),
            optional=("options", "labels"),
        )
        options_obj = obj.get("options")
        options: tuple[str, ...] | None = None
        if options_obj is not None:
            if not isinstance(options_obj, list) or not all(isinstance(o, str) for o in options_obj):
                raise ValueError("field 'options' must be a list of strings or null")
            options = tuple(options_obj)
        labels_obj = obj.get("labels")
        labels = CategoryLabels.from_json_dict(labels_obj) if labels_obj is not None else None
        return cls(
            task=_check_str(obj, "task", allow_empty=False),
            capability=_check_str(obj, "capability"),
            format=_check_str(obj, "format"),
            prompt=_check_str(obj, "prompt"),
            answer=_check_str(obj, "answer"),
            options=options,
            labels=labels,
        )


@dataclass(frozen=True)
class PreferencePair:
    """A (prompt, chosen, rejected) triple with its construction strategy."""

    prompt: str
    chosen: str
    rejected: str
    strategy: str
    source_id: str

    def __post_init__(self) -> None:
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy '{self.strategy}'")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "strategy": self.strategy,
            "source_id": self.source_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PreferencePair":
        _check_keys(obj, required=("prompt", "chosen", "rejected", "strategy", "source_id"))
        return cls(
            prompt=_check_str(obj, "prompt"),
            chosen=_check_str(obj, "chosen"),
            rejected=_check_str(obj, "rejected"),
            strategy=_check_str(obj, "strategy"),
            source_id=_check_str(obj, "source_id"),
        )


@dataclass(frozen=True)
class PredictionLogEntry:
    """One logged model prediction against its gold answer."""

    source_id: str
    prompt: str
    gold: str
    predicted: str

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError("gold must be non-empty")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "prompt": self.prompt,
            "gold": self.gold,
            "predicted": self.predicted,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PredictionLogEntry":
        _check_keys(obj, required=("source_id", "prompt", "gold", "predicted"))
        return cls(
            source_id=_check_str(obj, "source_id"),
            prompt=_check_str(obj, "prompt"),
            gold=_check_str(obj, "gold", allow_empty=False),
            predicted=_check_str(obj, "predicted"),
        )


@dataclass(frozen=True)
class JudgedCandidate:
    """A response pair scored by a judge model (judge inference happens upstream)."""

    source_id: str
    prompt: str
    response_a: str
    response_b: str
    preferred: str

    def __post_init__(self) -> None:
        if self.preferred not in PREFERENCE_SIDES:
            raise ValueError("preferred must be 'A' or 'B'")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "prompt": self.prompt,
            "response_a": self.response_a,
            "response_b": self.response_b,
            "preferred": self.preferred,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "JudgedCandidate":
        _check_keys(obj, required=("source_id", "prompt", "response_a", "response_b", "preferred"))
        return cls(
            source_id=_check_str(obj, "source_id"),
            prompt=_check_str(obj, "prompt"),
            response_a=_check_str(obj, "response_a"),
            response_b=_check_str(obj, "response_b"),
            preferred=_check_str(obj, "preferred"),
        )


@dataclass(frozen=True)
class CalibrationItem:
    """One judge-vs-human comparison used to gate the judge strategy."""

    judge_preference: str
    human_preference: str

    def __post_init__(self) -> None:
        if self.judge_preference not in PREFERENCE_SIDES:
            raise ValueError("judge_preference must be 'A' or 'B'")
        if self.human_preference not in PREFERENCE_SIDES:
            raise ValueError("human_preference must be 'A' or 'B'")

    def to_json_dict(self) -> dict[str, Any]:
        return {"judge_preference": self.judge_preference, "human_preference": self.human_preference}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CalibrationItem":
        _check_keys(obj, required=("judge_preference", "human_preference"))
        return cls(
            judge_preference=_check_str(obj, "judge_preference"),
            human_preference=_check_str(obj, "human_preference"),
        )


# Any record class exposing from_json_dict/to_json_dict works with the
# JSONL helpers below.
R = TypeVar("R")


def json_line(record: Any) -> str:
    """Canonical single-line JSON for a record."""
    return json.dumps(record.to_json_dict(), ensure_ascii=False, separators=(",", ":"))


def parse_jsonl(path: str | Path, record_type: Type[R]) -> tuple[list[R], list[ParseError]]:
    """Parse a JSONL file into records plus a list of per-line errors.

    Valid lines are returned in file order. Invalid lines are reported with
    their 1-based line number and never silently dropped. A missing file is
    fatal and raises ``FileNotFoundError``. For documents, a duplicate id is
    a per-line error and the first occurrence wins.
    """
    records: list[R] = []
    errors: list[ParseError] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(ParseError(line_no, f"invalid JSON: {exc.msg}"))
                continue
            try:
                record = record_type.from_json_dict(obj)
            except ValueError as exc:
                errors.append(ParseError(line_no, str(exc)))
                continue
            if record_type is Document:
                doc_id = record.id  # type: ignore[union-attr]
                if doc_id in seen_ids:
                    errors.append(ParseError(line_no, f"duplicate id '{doc_id}'"))
                    continue
                seen_ids.add(doc_id)
            records.append(record)
    return records, errors


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    """Write records as canonical JSONL; returns the number of lines written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json_line(record))
            fh.write("\n")
            n += 1
    return n
