import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redforge.packing import (
    Segment,
    SegmentRef,
    group_by_interaction,
    pack_corpus,
    pack_segments,
    reassemble_document,
    segment_document,
    segment_group,
    segment_text,
)
from redforge.records import Document, InteractionMeta
from redforge.tokenization import count_tokens


def doc(doc_id, text, parent=None, likes=0, source="sns", domain="notes"):
    meta = InteractionMeta(parent, likes) if (parent or likes or source == "sns") else None
    if source == "general":
        meta = None
    return Document(doc_id, source, domain, text, meta)


class TestGrouping:
    def test_comments_ordered_by_likes_then_id(self):
        c = doc("C", "context text")
        a = doc("A", "comment a", parent="C", likes=5)
        b = doc("B", "comment b", parent="C", likes=9)
        groups, orphans = group_by_interaction([c, a, b])
        assert orphans == []
        assert len(groups) == 1
        assert groups[0].members == ("C", "B", "A")
        assert groups[0].combined_text == "context text\ncomment b\ncomment a"

    def test_likes_tie_broken_by_id(self):
        c = doc("C", "ctx")
        x = doc("x2", "b", parent="C", likes=3)
        y = doc("x1", "a", parent="C", likes=3)
        groups, _ = group_by_interaction([c, x, y])
        assert groups[0].members == ("C", "x1", "x2")

    def test_dangling_parent_goes_to_orphans(self):
        lonely = doc("L", "hello", parent="missing")
        groups, orphans = group_by_interaction([lonely])
        assert groups == [] and orphans == [lonely]

    def test_empty_input(self):
        assert group_by_interaction([]) == ([], [])

    def test_singletons_form_groups(self):
        d = doc("S", "alone", source="general", domain="web")
        groups, orphans = group_by_interaction([d])
        assert orphans == []
        assert groups[0].members == ("S",)

    def test_nested_comment_chain_joins_root_group(self):
        c = doc("C", "root")
        m = doc("M", "mid", parent="C", likes=1)
        leaf = doc("Z", "leaf", parent="M", likes=9)
        groups, orphans = group_by_interaction([c, m, leaf])
        assert orphans == []
        assert groups[0].members == ("C", "Z", "M")

    def test_cycle_routes_to_orphans(self):
        a = doc("A", "a", parent="B")
        b = doc("B", "b", parent="A")
        groups, orphans = group_by_interaction([a, b])
        assert groups == [] and {d.id for d in orphans} == {"A", "B"}

    def test_subtree_of_orphan_is_orphaned(self):
        top = doc("T", "t", parent="missing")
        child = doc("K", "k", parent="T")
        groups, orphans = group_by_interaction([top, child])
        assert groups == [] and {d.id for d in orphans} == {"T", "K"}

    def test_partition_property(self):
        rng = random.Random(5)
        docs = [doc("C0", "ctx zero")]
        for i in range(1, 40):
            roll = rng.random()
            if roll < 0.4:
                docs.append(doc(f"c{i}", f"comment {i}", parent=rng.choice(docs).id, likes=rng.randrange(10)))
            elif roll < 0.5:
                docs.append(doc(f"o{i}", f"orphan {i}", parent=f"gone{i}"))
            else:
                docs.append(doc(f"n{i}", f"note {i}"))
        groups, orphans = group_by_interaction(docs)
        grouped_ids = [m for g in groups for m in g.members] + [d.id for d in orphans]
        assert sorted(grouped_ids) == sorted(d.id for d in docs)


class TestSegmentation:
    def test_below_threshold_single_segment(self):
        d = doc("D", "w " * 100, source="general", domain="web")
        segments = segment_document(d, 4096)
        assert len(segments) == 1
        assert segments[0].token_count == 100

    def test_hard_split_arithmetic(self):
        text = "x " * 9000
        d = doc("D", text.strip(), source="general", domain="web")
        segments = segment_document(d, 4096)
        assert [s.token_count for s in segments] == [4096, 4096, 808]

    def test_sentence_boundary_preferred(self):
        first = " ".join(f"a{i}" for i in range(3000)) + "."
        second = " ".join(f"b{i}" for i in range(2000)) + "."
        d = doc("D", first + " " + second, source="general", domain="web")
        segments = segment_document(d, 4096)
        assert len(segments) == 2
        ref0, ref1 = segments[0].refs[0], segments[1].refs[0]
        assert d.text[ref0.start : ref0.end].strip() == first
        assert d.text[ref1.start : ref1.end] == second
        assert [s.token_count for s in segments] == [3000, 2000]

    def test_reassembly_is_byte_exact(self):
        text = "多句中文。mixed with words! another sentence? final\nline without end"
        ranges = segment_text(text, 3)
        assert "".join(text[a:b] for a, b, _ in ranges) == text

    @settings(max_examples=60)
    @given(
        st.text(alphabet=st.sampled_from(list("ab .!?你好\n")), min_size=1, max_size=120),
        st.integers(min_value=1, max_value=12),
    )
    def test_segment_text_invariants(self, text, threshold):
        ranges = segment_text(text, threshold)
        assert "".join(text[a:b] for a, b, _ in ranges) == text
        assert sum(n for _, _, n in ranges) == count_tokens(text)
        assert all(n <= threshold for _, _, n in ranges)

    def test_zero_token_text(self):
        assert segment_text("  ", 5) == [(0, 2, 0)]

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            segment_text("abc", 0)


class TestSegmentGroup:
    def test_refs_map_back_to_members(self):
        c = doc("C", "one two three. four five.")
        a = doc("A", "six seven eight nine.", parent="C", likes=1)
        groups, _ = group_by_interaction([c, a])
        by_id = {"C": c, "A": a}
        segments = segment_group(groups[0], by_id, 5)
        assert sum(s.token_count for s in segments) == c.token_count + a.token_count
        for member in (c, a):
            pieces = [
                member.text[r.start : r.end]
                for s in segments
                for r in s.refs
                if r.doc_id == member.id
            ]
            assert "".join(pieces) == member.text

    def test_small_group_is_one_segment(self):
        c = doc("C", "short context")
        a = doc("A", "short comment", parent="C")
        groups, _ = group_by_interaction([c, a])
        segments = segment_group(groups[0], {"C": c, "A": a}, 4096)
        assert len(segments) == 1
        assert [r.doc_id for r in segments[0].refs] == ["C", "A"]


def seg(n, i=0):
    return Segment((SegmentRef(f"d{i}", 0, n),), n)


class TestPackSegments:
    def test_first_fit_decreasing_example(self):
        packed = pack_segments([seg(3000, 0), seg(1500, 1), seg(600, 2)], 4096)
        assert [p.token_count for p in packed] == [3600, 1500]
        assert [r.doc_id for r in packed[0].segments] == ["d0", "d2"]

    def test_exact_fits(self):
        packed = pack_segments([seg(4096, 0), seg(4096, 1)], 4096)
        assert [p.token_count for p in packed] == [4096, 4096]

    def test_empty(self):
        assert pack_segments([], 4096) == []

    def test_oversized_segment_is_fatal(self):
        with pytest.raises(ValueError):
            pack_segments([seg(5000)], 4096)

    def test_randomized_invariants(self):
        rng = random.Random(17)
        for _ in range(50):
            threshold = rng.randint(8, 64)
            sizes = [rng.randint(0, threshold) for _ in range(rng.randint(0, 30))]
            segments = [seg(n, i) for i, n in enumerate(sizes)]
            packed = pack_segments(segments, threshold)
            assert sum(p.token_count for p in packed) == sum(sizes)
            assert all(p.token_count <= threshold for p in packed)
            assert packed == pack_segments(segments, threshold)


class TestPackCorpus:
    def test_end_to_end_reassembly(self):
        rng = random.Random(3)
        docs = []
        for i in range(30):
            n_sent = rng.randint(1, 6)
            text = " ".join(
                " ".join(f"w{rng.randrange(99)}" for _ in range(rng.randint(2, 20))) + "."
                for _ in range(n_sent)
            )
            if i % 4 == 0 and i:
                docs.append(doc(f"d{i}", text, parent=f"d{i - 1}", likes=rng.randrange(5)))
            else:
                docs.append(doc(f"d{i}", text))
        packed, groups, orphans = pack_corpus(docs, 24)
        total = sum(d.token_count for d in docs)
        assert sum(p.token_count for p in packed) == total
        assert all(p.token_count <= 24 for p in packed)
        for d in docs:
            assert reassemble_document(d, packed) == d.text

    def test_packed_json_schema(self):
        packed, _, _ = pack_corpus([doc("D", "a few words here now", source="general", domain="web")], 16)
        payload = packed[0].to_json_dict()
        assert set(payload) == {"segments", "token_count"}
        assert set(payload["segments"][0]) == {"doc_id", "start", "end"}
