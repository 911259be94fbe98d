"""Sentence <-> (BIO sequence, relation tag table) conversion and decoding.

Relation cells for an ordered entity pair (head, tail) with type r are
chosen by ``CodecConfig``:

* ``cell_scope``: every (i, j) with i in head and j in tail, or only the
  pair of last words;
* ``directed``: cell (i, j) gets ``->r`` and the mirrored cell (j, i) gets
  ``<-r``; undirected tagging writes plain ``r`` at (i, j) only, so the
  position alone carries the direction;
* ``fill_region``: ``lower``/``upper`` keep only cells below/above the
  diagonal.

Decoding picks, for each pair of predicted entities, the labelling of the
pair's cells with the highest summed probability.  Under the default
configuration the score of "head -> tail with r" is the sum of P(->r) over
head x tail plus P(<-r) over tail x head.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EncodeError, SpanReferenceError
from .schema import EntitySpan, Relation

NONE_TAG = "<none>"
OUTSIDE = "O"

FILL_REGIONS = ("entire", "lower", "upper")
CELL_SCOPES = ("entire-entity", "last-word")


@dataclass(frozen=True)
class CodecConfig:
    fill_region: str = "entire"
    cell_scope: str = "entire-entity"
    directed: bool = True

    def __post_init__(self):
        if self.fill_region not in FILL_REGIONS:
            raise ConfigError(f"fill_region must be one of {FILL_REGIONS}")
        if self.cell_scope not in CELL_SCOPES:
            raise ConfigError(f"cell_scope must be one of {CELL_SCOPES}")
        if not self.directed and self.fill_region != "entire":
            raise ConfigError("undirected relation tags need the entire table to keep direction")

    def to_json(self):
        return {"fill_region": self.fill_region, "cell_scope": self.cell_scope, "directed": self.directed}


class TagSet:
    """Index maps for BIO entity tags and relation tags."""

    def __init__(self, entity_types, relation_types, directed=True):
        self.entity_types = list(entity_types)
        self.relation_types = list(relation_types)
        self.directed = directed
        self.ner_tags = [OUTSIDE]
        for t in self.entity_types:
            self.ner_tags += [f"B-{t}", f"I-{t}"]
        self.re_tags = [NONE_TAG]
        for r in self.relation_types:
            self.re_tags += [f"->{r}", f"<-{r}"] if directed else [r]
        self.ner_index = {t: k for k, t in enumerate(self.ner_tags)}
        self.re_index = {t: k for k, t in enumerate(self.re_tags)}

    @classmethod
    def from_sentences(cls, sentences, directed=True):
        ents = sorted({e.type for s in sentences for e in s.entities})
        rels = sorted({r.type for s in sentences for r in s.relations})
        return cls(ents, rels, directed)

    def rel_tag(self, rel_type, kind):
        if not self.directed:
            return rel_type
        return f"->{rel_type}" if kind == "fwd" else f"<-{rel_type}"

    def to_json(self):
        return {"entity_types": self.entity_types, "relation_types": self.relation_types, "directed": self.directed}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["entity_types"], obj["relation_types"], obj["directed"])


@dataclass
class TagTable:
    ner: list
    re: list

    def ner_indices(self, tagset):
        return np.array([tagset.ner_index[t] for t in self.ner], dtype=np.intp)

    def re_indices(self, tagset):
        return np.array([[tagset.re_index[t] for t in row] for row in self.re], dtype=np.intp)


def bio_tags(n, entities):
    tags = [OUTSIDE] * n
    for e in entities:
        tags[e.begin] = f"B-{e.type}"
        for k in range(e.begin + 1, e.end):
            tags[k] = f"I-{e.type}"
    return tags


def relation_cells(head, tail, config):
    """Cells (i, j, kind) that carry the relation head -> tail; kind is fwd or bwd."""
    if config.cell_scope == "last-word":
        rows, cols = [head.end - 1], [tail.end - 1]
    else:
        rows, cols = range(head.begin, head.end), range(tail.begin, tail.end)
    cells = []
    for i in rows:
        for j in cols:
            cells.append((i, j, "fwd"))
            if config.directed:
                cells.append((j, i, "bwd"))
    if config.fill_region == "lower":
        cells = [c for c in cells if c[0] > c[1]]
    elif config.fill_region == "upper":
        cells = [c for c in cells if c[0] < c[1]]
    return cells


def _check_spans(sentence):
    spans = sorted(sentence.entities)
    for a, b in zip(spans, spans[1:]):
        if a.overlaps(b):
            raise EncodeError(f"overlapping entity spans {a} and {b}")
    for e in spans:
        if e.end > len(sentence.tokens):
            raise EncodeError(f"span {e} exceeds sentence length {len(sentence.tokens)}")
    known = set(spans)
    for r in sentence.relations:
        for span in (r.head, r.tail):
            if span not in known:
                raise SpanReferenceError(f"relation {r.type} references unknown span {span}")


def encode(sentence, tagset, config=CodecConfig(), strict=True):
    """Supervision pair for one sentence.

    Two relations that claim the same cell with different tags (e.g. both
    directions between one pair) raise in strict mode; otherwise the later
    relation wins.
    """
    _check_spans(sentence)
    n = len(sentence.tokens)
    table = [[NONE_TAG] * n for _ in range(n)]
    for r in sentence.relations:
        for i, j, kind in relation_cells(r.head, r.tail, config):
            tag = tagset.rel_tag(r.type, kind)
            if strict and table[i][j] not in (NONE_TAG, tag):
                raise EncodeError(f"relation {r} conflicts with tag {table[i][j]!r} at cell ({i}, {j})")
            table[i][j] = tag
    return TagTable(bio_tags(n, sentence.entities), table)


def decode_entities(p_ner, tagset):
    """Argmax tagging followed by BIO segmentation.

    An I-X that follows O or a different type opens a new X entity.
    """
    tags = np.argmax(np.asarray(p_ner), axis=-1)  # first maximum wins ties
    spans = []
    cur_type, cur_begin = None, None
    for k, t in enumerate(tags):
        name = tagset.ner_tags[t]
        if name == OUTSIDE:
            if cur_type is not None:
                spans.append(EntitySpan(cur_begin, k, cur_type))
            cur_type = None
            continue
        prefix, etype = name[0], name[2:]
        if prefix == "I" and cur_type == etype:
            continue
        if cur_type is not None:
            spans.append(EntitySpan(cur_begin, k, cur_type))
        cur_type, cur_begin = etype, k
    if cur_type is not None:
        spans.append(EntitySpan(cur_begin, len(tags), cur_type))
    return spans


def decode_relations(p_re, entities, tagset, config=CodecConfig()):
    """One decision per unordered entity pair {A, B} (A starting first).

    Each hypothesis assigns an expected tag to every cell of the pair's region
    (the cells either direction could occupy): no relation expects the none
    tag everywhere, "A -> B with r" expects what ``encode`` would write for
    that relation and the none tag elsewhere, and likewise for "B -> A".  The
    hypothesis with the largest summed probability wins; ties go to the
    earliest of (none, A->B r1, B->A r1, A->B r2, ...).
    """
    p_re = np.asarray(p_re)
    ents = sorted(entities)
    out = []
    for a_pos, a in enumerate(ents):
        for b in ents[a_pos + 1 :]:
            hyps = [None]
            for r in tagset.relation_types:
                hyps += [(a, b, r), (b, a, r)]
            fwd, bwd = relation_cells(a, b, config), relation_cells(b, a, config)
            region = sorted({(i, j) for i, j, _ in fwd + bwd})
            if not region:
                continue
            pos = {c: k for k, c in enumerate(region)}
            expected = np.zeros((len(hyps), len(region)), dtype=np.intp)
            for h, hyp in enumerate(hyps[1:], 1):
                head, tail, r = hyp
                for i, j, kind in relation_cells(head, tail, config):
                    expected[h, pos[(i, j)]] = tagset.re_index[tagset.rel_tag(r, kind)]
            ii = np.array([c[0] for c in region])
            jj = np.array([c[1] for c in region])
            probs = p_re[ii, jj]  # [cells, tags]
            scores = probs[np.arange(len(region))[None, :], expected].sum(axis=1)
            best = int(np.argmax(scores))
            if best > 0:
                head, tail, r = hyps[best]
                out.append(Relation(head, tail, r))
    return out


def one_hot_tables(tags, tagset):
    """Gold tag table as one-hot probability arrays (ner [N, K], re [N, N, R])."""
    ner = np.eye(len(tagset.ner_tags))[tags.ner_indices(tagset)]
    re = np.eye(len(tagset.re_tags))[tags.re_indices(tagset)]
    return ner, re


def roundtrip_check(sentence, tagset, config=CodecConfig()):
    tags = encode(sentence, tagset, config)
    p_ner, p_re = one_hot_tables(tags, tagset)
    ents = decode_entities(p_ner, tagset)
    rels = decode_relations(p_re, ents, tagset, config)
    return set(ents) == set(sentence.entities) and set(rels) == set(sentence.relations)
