"""Deterministic tokenizer and sentence splitting shared by every pipeline stage.

Token rule: text is split on whitespace; inside each chunk, every CJK
codepoint counts as one token and every maximal non-CJK run counts as one
token. The rule needs no vocabulary assets, so token budgets and thresholds
are reproducible anywhere.
"""

from __future__ import annotations

import re
from typing import NamedTuple

# Codepoint ranges treated as CJK (one token per codepoint).
_CJK_RANGES = (
    (0x3000, 0x303F),  # CJK symbols and punctuation
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x3400, 0x4DBF),  # CJK extension A
    (0x4E00, 0x9FFF),  # CJK unified ideographs
    (0xAC00, 0xD7A3),  # hangul syllables
    (0xF900, 0xFAFF),  # CJK compatibility ideographs
    (0xFF00, 0xFFEF),  # fullwidth and halfwidth forms
    (0x20000, 0x2A6DF),  # CJK extension B
)

_CJK_CLASS = "".join(f"{chr(lo)}-{chr(hi)}" for lo, hi in _CJK_RANGES)
_TOKEN_RE = re.compile(f"[{_CJK_CLASS}]|[^{_CJK_CLASS}\\s]+")

SENTENCE_DELIMITERS = ".!?。！？\n"
_SENTENCE_DELIM_SET = frozenset(SENTENCE_DELIMITERS)
_WS_RE = re.compile(r"\s+")


class TokenSpan(NamedTuple):
    start: int
    end: int


def token_spans(text: str) -> list[TokenSpan]:
    """Character spans of every token, in order."""
    return [TokenSpan(m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> list[str]:
    """Token strings under the deterministic word/CJK rule."""
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    """Number of tokens in ``text``; the empty string counts zero."""
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WS_RE.sub(" ", text).strip()


def split_sentences(text: str) -> list[str]:
    """Split on sentence delimiters, whitespace-normalize, drop empties."""
    parts = re.split(f"[{re.escape(SENTENCE_DELIMITERS)}]", text)
    sentences = [normalize_whitespace(p) for p in parts]
    return [s for s in sentences if s]


def sentence_boundaries(text: str) -> list[int]:
    """Character positions just past each sentence end.

    A boundary sits after a delimiter character plus any whitespace that
    follows it, so splitting at boundaries keeps separators attached to the
    preceding piece and concatenation stays byte-exact.
    """
    boundaries = []
    n = len(text)
    i = 0
    while i < n:
        if text[i] in _SENTENCE_DELIM_SET:
            j = i + 1
            while j < n and (text[j] in _SENTENCE_DELIM_SET or text[j].isspace()):
                j += 1
            boundaries.append(j)
            i = j
        else:
            i += 1
    return boundaries
