import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabseq.codec import (
    NONE_TAG, OUTSIDE, CodecConfig, TagSet, bio_tags, decode_entities, decode_relations, encode, one_hot_tables,
    roundtrip_check,
)
from tabseq.errors import ConfigError, EncodeError, SpanReferenceError
from tabseq.schema import EntitySpan, Relation, Sentence

from conftest import ENTITY_TYPES, RELATION_TYPES, oracle_relations, random_sentence, random_spans, random_table

TAGSET = TagSet(ENTITY_TYPES, RELATION_TYPES)


# -- encoding -----------------------------------------------------------------


def test_bio_tags():
    ents = [EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC")]
    assert bio_tags(5, ents) == ["B-PER", "I-PER", OUTSIDE, "B-LOC", OUTSIDE]


def test_encode_directed_entire_fills_both_blocks():
    john, paris = EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC")
    s = Sentence(["John", "Smith", "in", "Paris"], [john, paris], [Relation(john, paris, "Live_In")])
    tags = encode(s, TAGSET)
    assert tags.ner == ["B-PER", "I-PER", "O", "B-LOC"]
    filled = {(i, j): t for i, row in enumerate(tags.re) for j, t in enumerate(row) if t != NONE_TAG}
    assert filled == {(0, 3): "->Live_In", (1, 3): "->Live_In", (3, 0): "<-Live_In", (3, 1): "<-Live_In"}


@pytest.mark.parametrize("region, cells", [("lower", {(3, 0), (3, 1)}), ("upper", {(0, 3), (1, 3)})])
def test_encode_triangle_fills(region, cells):
    john, paris = EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC")
    s = Sentence(["a"] * 4, [john, paris], [Relation(john, paris, "Live_In")])
    tags = encode(s, TAGSET, CodecConfig(fill_region=region))
    assert {(i, j) for i in range(4) for j in range(4) if tags.re[i][j] != NONE_TAG} == cells


def test_encode_last_word_scope():
    john, paris = EntitySpan(0, 2, "PER"), EntitySpan(3, 5, "LOC")
    s = Sentence(["a"] * 5, [john, paris], [Relation(john, paris, "Live_In")])
    tags = encode(s, TAGSET, CodecConfig(cell_scope="last-word"))
    assert {(i, j) for i in range(5) for j in range(5) if tags.re[i][j] != NONE_TAG} == {(1, 4), (4, 1)}


def test_undirected_tagging_and_config_guard():
    ts = TagSet(ENTITY_TYPES, RELATION_TYPES, directed=False)
    a, b = EntitySpan(0, 1, "PER"), EntitySpan(2, 3, "LOC")
    tags = encode(Sentence(["a"] * 3, [a, b], [Relation(a, b, "Kill")]), ts, CodecConfig(directed=False))
    assert tags.re[0][2] == "Kill" and tags.re[2][0] == NONE_TAG
    with pytest.raises(ConfigError):
        CodecConfig(directed=False, fill_region="lower")


def test_encode_errors():
    a, b = EntitySpan(0, 2, "PER"), EntitySpan(1, 3, "LOC")
    with pytest.raises(EncodeError):
        encode(Sentence(["x"] * 3, [a, b]), TAGSET)
    c = EntitySpan(2, 3, "LOC")
    with pytest.raises(SpanReferenceError):
        encode(Sentence(["x"] * 3, [EntitySpan(0, 1, "PER")], [Relation(EntitySpan(0, 1, "PER"), c, "Kill")]), TAGSET)
    a = EntitySpan(0, 1, "PER")
    both = [Relation(a, c, "Kill"), Relation(c, a, "Kill")]
    with pytest.raises(EncodeError):
        encode(Sentence(["x"] * 3, [a, c], both), TAGSET)
    assert encode(Sentence(["x"] * 3, [a, c], both), TAGSET, strict=False).re[0][2] == "<-Kill"


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tag_table_directed_symmetry(seed):
    """Cell (i, j) holds ->r exactly when (j, i) holds <-r."""
    s = random_sentence(random.Random(seed))
    table = encode(s, TAGSET).re
    n = len(s.tokens)
    for i in range(n):
        assert table[i][i] == NONE_TAG
        for j in range(n):
            t = table[i][j]
            if t.startswith("->"):
                assert table[j][i] == "<-" + t[2:]
            elif t.startswith("<-"):
                assert table[j][i] == "->" + t[2:]
            else:
                assert table[j][i] == NONE_TAG


# -- decoding -----------------------------------------------------------------


def test_decode_entities_repairs_bio():
    ts = TagSet(["PER", "LOC"], [])
    seq = ["I-PER", "I-PER", "O", "B-LOC", "I-PER", "B-LOC", "I-LOC"]
    p = np.eye(len(ts.ner_tags))[[ts.ner_index[t] for t in seq]]
    assert decode_entities(p, ts) == [
        EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC"), EntitySpan(4, 5, "PER"), EntitySpan(5, 7, "LOC"),
    ]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_decoded_entities_are_valid_spans(seed, n):
    rng = np.random.default_rng(seed)
    p = rng.random(size=(n, len(TAGSET.ner_tags)))
    ents = decode_entities(p, TAGSET)
    covered = [0] * n
    for e in ents:
        assert 0 <= e.begin < e.end <= n and e.type in ENTITY_TYPES
        for k in range(e.begin, e.end):
            covered[k] += 1
    assert max(covered) <= 1
    # the re-encoded tags are well-formed BIO
    tags = bio_tags(n, ents)
    for prev, cur in zip([OUTSIDE] + tags, tags):
        if cur.startswith("I-"):
            assert prev != OUTSIDE and prev[2:] == cur[2:]


def test_decode_relations_dominant_cells():
    a, b = EntitySpan(1, 2, "PER"), EntitySpan(2, 3, "LOC")
    p = np.zeros((4, 4, len(TAGSET.re_tags)))
    p[..., 0] = 1.0
    r = TAGSET.re_index["->Kill"]
    p[1, 2] = 0.1 / (len(TAGSET.re_tags) - 1)
    p[1, 2, r] = 0.9
    p[2, 1] = 0.1 / (len(TAGSET.re_tags) - 1)
    p[2, 1, TAGSET.re_index["<-Kill"]] = 0.9
    assert decode_relations(p, [a, b], TAGSET) == [Relation(a, b, "Kill")]


def test_decode_relations_all_none():
    p = np.zeros((5, 5, len(TAGSET.re_tags)))
    p[..., 0] = 1.0
    assert decode_relations(p, [EntitySpan(0, 1, "PER"), EntitySpan(2, 4, "LOC")], TAGSET) == []


def test_decode_relations_ties_prefer_none_then_lowest():
    a, b = EntitySpan(0, 1, "PER"), EntitySpan(1, 2, "LOC")
    p = np.full((2, 2, len(TAGSET.re_tags)), 1.0 / len(TAGSET.re_tags))
    assert decode_relations(p, [a, b], TAGSET) == []


@pytest.mark.parametrize("config", [
    CodecConfig(), CodecConfig(fill_region="lower"), CodecConfig(fill_region="upper"),
    CodecConfig(cell_scope="last-word"), CodecConfig(directed=False),
])
def test_decode_relations_matches_oracle(config):
    ts = TagSet(ENTITY_TYPES, RELATION_TYPES, directed=config.directed)
    rng = np.random.default_rng(7)
    pyrng = random.Random(7)
    for trial in range(150):
        n = pyrng.randint(2, 6)
        ents = random_spans(pyrng, n)
        p = random_table(rng, n, len(ts.re_tags), peaked=trial % 2 == 0)
        assert set(decode_relations(p, ents, ts, config)) == oracle_relations(p, ents, ts, config)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_decode_relations_invariant_to_uniform_rescaling(seed, scale):
    rng = np.random.default_rng(seed)
    pyrng = random.Random(seed)
    n = pyrng.randint(2, 6)
    ents = random_spans(pyrng, n)
    p = random_table(rng, n, len(TAGSET.re_tags), peaked=True)
    assert set(decode_relations(p, ents, TAGSET)) == set(decode_relations(p * scale, ents, TAGSET))


@pytest.mark.parametrize("config", [CodecConfig(), CodecConfig(fill_region="lower"), CodecConfig(fill_region="upper"),
                                    CodecConfig(cell_scope="last-word")])
def test_roundtrip_identity(config):
    pyrng = random.Random(11)
    for _ in range(300):
        assert roundtrip_check(random_sentence(pyrng), TAGSET, config)


def test_one_hot_tables_shapes():
    s = random_sentence(random.Random(3))
    ner, re = one_hot_tables(encode(s, TAGSET), TAGSET)
    n = len(s.tokens)
    assert ner.shape == (n, len(TAGSET.ner_tags)) and re.shape == (n, n, len(TAGSET.re_tags))


def test_tagset_json_roundtrip():
    ts = TagSet.from_json(TAGSET.to_json())
    assert ts.ner_tags == TAGSET.ner_tags and ts.re_tags == TAGSET.re_tags
    assert TAGSET.re_tags[:3] == [NONE_TAG, "->Live_In", "<-Live_In"]
