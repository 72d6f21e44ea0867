"""Interaction grouping, document segmentation, and sequence packing.

Contexts and their comments are grouped so related content trains together.
Group texts over the token threshold are re-segmented, preferring sentence
boundaries, then packed with first-fit-decreasing into fixed-budget
sequences. Every split point is token-aligned, so token totals are conserved
exactly and each document's text is reconstructable byte-for-byte from its
segment ranges.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .records import Document
from .tokenization import sentence_boundaries, token_spans

GROUP_TEXT_SEPARATOR = "\n"


@dataclass(frozen=True)
class InteractionGroup:
    context_id: str
    members: tuple[str, ...]
    combined_text: str


def _likes(doc: Document) -> int:
    return doc.interactions.likes if doc.interactions else 0


def _parent_id(doc: Document) -> str | None:
    return doc.interactions.parent_id if doc.interactions else None


def group_by_interaction(
    docs: Sequence[Document],
) -> tuple[list[InteractionGroup], list[Document]]:
    """Cluster comments under their context documents.

    A document with a parent joins the group rooted at its top ancestor;
    documents with neither parent nor children become singleton groups.
    Comments are ordered by likes descending, ties broken by id ascending.
    Documents whose parent chain dangles (or loops) go to the orphan bucket.
    Real SNS dumps are incomplete, so orphans are routed, not errors.
    """
    by_id = {doc.id: doc for doc in docs}

    def resolve_root(doc: Document) -> str | None:
        seen = {doc.id}
        current = doc
        while True:
            parent_id = _parent_id(current)
            if parent_id is None:
                return current.id
            parent = by_id.get(parent_id)
            if parent is None or parent.id in seen:
                return None
            seen.add(parent.id)
            current = parent

    roots: dict[str, str] = {}
    orphans: list[Document] = []
    for doc in docs:
        root = resolve_root(doc)
        if root is None:
            orphans.append(doc)
        else:
            roots[doc.id] = root

    children: dict[str, list[Document]] = {}
    for doc in docs:
        root = roots.get(doc.id)
        if root is not None and root != doc.id:
            children.setdefault(root, []).append(doc)

    groups: list[InteractionGroup] = []
    for doc in docs:
        if roots.get(doc.id) != doc.id:
            continue
        comments = sorted(children.get(doc.id, []), key=lambda d: (-_likes(d), d.id))
        members = (doc.id,) + tuple(c.id for c in comments)
        combined = GROUP_TEXT_SEPARATOR.join([doc.text] + [c.text for c in comments])
        groups.append(InteractionGroup(doc.id, members, combined))
    return groups, orphans


class TextSegment(NamedTuple):
    start: int
    end: int
    token_count: int


def segment_text(text: str, threshold: int) -> list[TextSegment]:
    """Partition ``text`` into character ranges of at most ``threshold`` tokens.

    Each split prefers the last sentence boundary at or before the threshold
    and falls back to a hard split exactly at the threshold. Split points are
    always token-aligned, so segment token counts sum to the text's count and
    concatenating the ranges reproduces the text.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    spans = token_spans(text)
    n_tokens = len(spans)
    if n_tokens <= threshold:
        return [TextSegment(0, len(text), n_tokens)]

    starts = [s.start for s in spans]
    aligned = []
    for p in sentence_boundaries(text):
        idx = bisect.bisect_right(starts, p) - 1
        if idx >= 0 and spans[idx].start < p < spans[idx].end:
            continue  # boundary falls inside a token, not splittable
        aligned.append(p)

    segments: list[TextSegment] = []
    start_char, start_tok = 0, 0
    while start_tok < n_tokens:
        remaining = n_tokens - start_tok
        if remaining <= threshold:
            segments.append(TextSegment(start_char, len(text), remaining))
            break
        hard_char = spans[start_tok + threshold].start
        min_char = spans[start_tok].end
        cut = hard_char
        idx = bisect.bisect_right(aligned, hard_char) - 1
        if idx >= 0 and aligned[idx] >= min_char:
            cut = aligned[idx]
        next_tok = bisect.bisect_left(starts, cut)
        segments.append(TextSegment(start_char, cut, next_tok - start_tok))
        start_char, start_tok = cut, next_tok
    return segments


class SegmentRef(NamedTuple):
    doc_id: str
    start: int
    end: int


@dataclass(frozen=True)
class Segment:
    refs: tuple[SegmentRef, ...]
    token_count: int


def segment_document(doc: Document, threshold: int) -> list[Segment]:
    """Segment a single document; each segment is one contiguous char range."""
    return [
        Segment((SegmentRef(doc.id, seg.start, seg.end),), seg.token_count)
        for seg in segment_text(doc.text, threshold)
    ]


def segment_group(
    group: InteractionGroup, docs_by_id: Mapping[str, Document], threshold: int
) -> list[Segment]:
    """Segment a group's combined text, mapping ranges back to member documents.

    The joining separators between members carry no tokens and are dropped
    from the refs, so token totals still match the member documents exactly.
    """
    offsets: list[tuple[str, int, int]] = []
    cursor = 0
    for member_id in group.members:
        text = docs_by_id[member_id].text
        offsets.append((member_id, cursor, cursor + len(text)))
        cursor += len(text) + len(GROUP_TEXT_SEPARATOR)

    segments = []
    for seg in segment_text(group.combined_text, threshold):
        refs = []
        for member_id, m_start, m_end in offsets:
            lo = max(seg.start, m_start)
            hi = min(seg.end, m_end)
            if lo < hi:
                refs.append(SegmentRef(member_id, lo - m_start, hi - m_start))
        segments.append(Segment(tuple(refs), seg.token_count))
    return segments


@dataclass(frozen=True)
class PackedSequence:
    segments: tuple[SegmentRef, ...]
    token_count: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "segments": [{"doc_id": r.doc_id, "start": r.start, "end": r.end} for r in self.segments],
            "token_count": self.token_count,
        }


def pack_segments(segments: Sequence[Segment], threshold: int) -> list[PackedSequence]:
    """First-fit-decreasing packing into sequences of at most ``threshold`` tokens.

    Deterministic: segments are sorted by token count descending with input
    order breaking ties, so within a sequence sizes are non-increasing.
    """
    for seg in segments:
        if seg.token_count > threshold:
            raise ValueError(
                f"segment of {seg.token_count} tokens exceeds threshold {threshold}"
            )
    order = sorted(range(len(segments)), key=lambda i: (-segments[i].token_count, i))
    bins: list[list[int]] = []
    room: list[int] = []
    for i in order:
        need = segments[i].token_count
        placed = False
        for b, free in enumerate(room):
            if need <= free:
                bins[b].append(i)
                room[b] -= need
                placed = True
                break
        if not placed:
            bins.append([i])
            room.append(threshold - need)
    packed = []
    for members in bins:
        refs: tuple[SegmentRef, ...] = ()
        for i in members:
            refs += segments[i].refs
        packed.append(PackedSequence(refs, sum(segments[i].token_count for i in members)))
    return packed


def pack_corpus(docs: Sequence[Document], threshold: int) -> tuple[list[PackedSequence], list[InteractionGroup], list[Document]]:
    """Full pack stage: group, segment (groups re-segmented), then pack."""
    groups, orphans = group_by_interaction(docs)
    docs_by_id = {doc.id: doc for doc in docs}
    segments: list[Segment] = []
    for group in groups:
        segments.extend(segment_group(group, docs_by_id, threshold))
    for doc in orphans:
        segments.extend(segment_document(doc, threshold))
    return pack_segments(segments, threshold), groups, orphans


def reassemble_document(doc: Document, packed: Iterable[PackedSequence]) -> str:
    """Rebuild a document's text from its refs scattered across sequences."""
    pieces = sorted(
        (ref for seq in packed for ref in seq.segments if ref.doc_id == doc.id),
        key=lambda r: r.start,
    )
    return "".join(doc.text[r.start : r.end] for r in pieces)
