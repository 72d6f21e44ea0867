"""redforge: deterministic data pipelines for three-stage domain training."""

__version__ = "0.1.0"

from .records import (
    CalibrationItem,
    Document,
    InteractionMeta,
    JudgedCandidate,
    ParseError,
    PredictionLogEntry,
    PreferencePair,
    TaskSample,
    parse_jsonl,
    write_jsonl,
)
from .tokenization import count_tokens, tokenize

__all__ = [
    "CalibrationItem",
    "Document",
    "InteractionMeta",
    "JudgedCandidate",
    "ParseError",
    "PredictionLogEntry",
    "PreferencePair",
    "TaskSample",
    "count_tokens",
    "parse_jsonl",
    "tokenize",
    "write_jsonl",
    "__version__",
]
