"""Corpus ingestion, splits and precomputed feature files.

Corpus format (JSONL, one sentence per line)::

    {"id": "s1", "tokens": ["John", "lives", "in", "Paris"],
     "entities": [{"start": 0, "end": 1, "type": "PER"}, {"start": 3, "end": 4, "type": "LOC"}],
     "relations": [{"head": 0, "tail": 1, "type": "LiveIn"}]}

``end`` is exclusive; ``head``/``tail`` index into ``entities``; ``id`` is
optional and defaults to the 0-based line number.

Feature file format: one UTF-8 JSON header line terminated by ``\\n``::

    {"kind": "embedding" | "attention", "width": W,
     "sentences": [{"id": "s1", "n": 4}, ...]}

followed by little-endian float32 values, sentence-major in header order.
Each sentence contributes N*W values (embedding, row-major [N, W]) or
N*N*W values (attention, row-major [N, N, W]).
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, CorruptionError, CoverageError, FormatError, SpanReferenceError
from .schema import EntitySpan, Relation, Sentence

log = logging.getLogger(__name__)

FEATURE_KINDS = ("embedding", "attention")


@dataclass
class Corpus:
    sentences: list
    entity_types: list = field(default_factory=list)
    relation_types: list = field(default_factory=list)
    split: str = ""
    dropped: int = 0

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @classmethod
    def from_sentences(cls, sentences, split=""):
        sentences = list(sentences)
        return cls(
            sentences,
            sorted({e.type for s in sentences for e in s.entities}),
            sorted({r.type for s in sentences for r in s.relations}),
            split,
        )


def parse_sentence(obj, default_id="", lineno=None):
    try:
        tokens = obj["tokens"]
        raw_entities = obj.get("entities", [])
        raw_relations = obj.get("relations", [])
    except (KeyError, AttributeError):
        raise FormatError("object must have a 'tokens' list", lineno) from None
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) and t for t in tokens):
        raise FormatError("'tokens' must be a non-empty list of non-empty strings", lineno)
    entities = []
    for e in raw_entities:
        try:
            start, end, etype = int(e["start"]), int(e["end"]), str(e["type"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"bad entity {e!r}", lineno) from None
        if not 0 <= start < end <= len(tokens):
            raise FormatError(f"entity [{start}, {end}) outside sentence of length {len(tokens)}", lineno)
        entities.append(EntitySpan(start, end, etype))
    relations = []
    for r in raw_relations:
        try:
            h, t, rtype = int(r["head"]), int(r["tail"]), str(r["type"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"bad relation {r!r}", lineno) from None
        for idx in (h, t):
            if not 0 <= idx < len(entities):
                where = f"line {lineno}: " if lineno is not None else ""
                raise SpanReferenceError(f"{where}relation refers to entity {idx} but only {len(entities)} exist")
        if h == t:
            raise FormatError("relation head and tail are the same entity", lineno)
        relations.append(Relation(entities[h], entities[t], rtype))
    return Sentence(list(tokens), entities, relations, str(obj.get("id", default_id)))


def has_overlap(sentence):
    spans = sorted(sentence.entities)
    return any(a.overlaps(b) for a, b in zip(spans, spans[1:]))


def load_corpus(path, split=""):
    """Read and validate a JSONL corpus; sentences with overlapping entities are dropped."""
    sentences = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
            sent = parse_sentence(obj, default_id=str(lineno - 1), lineno=lineno)
            if has_overlap(sent):
                dropped += 1
                continue
            sentences.append(sent)
    if dropped:
        log.warning("dropped %d sentence(s) with overlapping entities from %s", dropped, path)
    corpus = Corpus.from_sentences(sentences, split)
    corpus.dropped = dropped
    return corpus


def dumps_corpus(sentences):
    return "".join(json.dumps(s.to_json(), ensure_ascii=False) + "\n" for s in sentences)


def save_corpus(corpus, path):
    sentences = corpus.sentences if isinstance(corpus, Corpus) else corpus
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_corpus(sentences))


def stats(corpus):
    entity_types = sorted({e.type for s in corpus for e in s.entities})
    relation_types = sorted({r.type for s in corpus for r in s.relations})
    return {
        "sentences": len(corpus.sentences),
        "entities": sum(len(s.entities) for s in corpus),
        "entity_types": len(entity_types),
        "relations": sum(len(s.relations) for s in corpus),
        "relation_types": len(relation_types),
        "tokens": sum(len(s.tokens) for s in corpus),
        "dropped_overlapping": corpus.dropped,
    }


# -- feature files -----------------------------------------------------------


def write_features(path, kind, items, width):
    """``items``: iterable of (sentence_id, array) with shape [N, W] or [N, N, W]."""
    if kind not in FEATURE_KINDS:
        raise ConfigError(f"feature kind must be one of {FEATURE_KINDS}")
    items = list(items)
    header = {"kind": kind, "width": int(width), "sentences": []}
    blocks = []
    for sid, arr in items:
        arr = np.asarray(arr)
        expected_ndim = 2 if kind == "embedding" else 3
        if arr.ndim != expected_ndim or arr.shape[-1] != width:
            raise ConfigError(f"feature for {sid!r} has shape {arr.shape}, expected {expected_ndim}-d with width {width}")
        header["sentences"].append({"id": str(sid), "n": int(arr.shape[0])})
        blocks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for blk in blocks:
            fh.write(blk)


def read_features(path):
    """Return (header, {sentence_id: float64 array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CorruptionError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
        kind, width, entries = header["kind"], int(header["width"]), header["sentences"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptionError(f"{path}: unreadable header ({exc})") from None
    if kind not in FEATURE_KINDS:
        raise CorruptionError(f"{path}: unknown feature kind {kind!r}")
    body = raw[nl + 1 :]
    sizes = [(e["n"] * (e["n"] if kind == "attention" else 1) * width) for e in entries]
    if len(body) != 4 * sum(sizes):
        raise CorruptionError(f"{path}: body has {len(body)} bytes, header implies {4 * sum(sizes)}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    out = {}
    offset = 0
    for e, size in zip(entries, sizes):
        n = e["n"]
        shape = (n, width) if kind == "embedding" else (n, n, width)
        out[str(e["id"])] = values[offset : offset + size].reshape(shape)
        offset += size
    return header, out


def load_features(path, corpus, expected_width=None):
    """Per-sentence feature arrays aligned with ``corpus.sentences``."""
    header, table = read_features(path)
    if expected_width is not None and header["width"] != expected_width:
        raise ConfigError(f"{path}: feature width {header['width']} != configured {expected_width}")
    out = []
    for s in corpus:
        if s.id not in table:
            raise CoverageError(f"{path}: no features for sentence id {s.id!r}")
        arr = table[s.id]
        if arr.shape[0] != len(s.tokens):
            raise AlignmentError(f"sentence {s.id!r} has N={len(s.tokens)} tokens but feature rows={arr.shape[0]}")
        out.append(arr)
    return header["kind"], out


# -- splits ------------------------------------------------------------------


def make_splits(corpus, scheme="fixed-dev-frac", seed=0, frac=0.15, k=5):
    """``fixed-dev-frac`` -> (train, dev); ``kfold`` -> list of (train, test) pairs."""
    sentences = corpus.sentences if isinstance(corpus, Corpus) else list(corpus)
    order = np.random.default_rng(seed).permutation(len(sentences))
    if scheme == "fixed-dev-frac":
        n_dev = int(round(frac * len(sentences)))
        dev_idx = set(order[:n_dev].tolist())
        train = [s for i, s in enumerate(sentences) if i not in dev_idx]
        dev = [s for i, s in enumerate(sentences) if i in dev_idx]
        return Corpus.from_sentences(train, "train"), Corpus.from_sentences(dev, "dev")
    if scheme == "kfold":
        if not 2 <= k <= len(sentences):
            raise ConfigError(f"kfold needs 2 <= k <= {len(sentences)}, got {k}")
        folds = np.array_split(order, k)
        out = []
        for f in folds:
            test_idx = set(f.tolist())
            train = [s for i, s in enumerate(sentences) if i not in test_idx]
            test = [s for i, s in enumerate(sentences) if i in test_idx]
            out.append((Corpus.from_sentences(train, "train"), Corpus.from_sentences(test, "test")))
        return out
    raise ConfigError(f"unknown split scheme {scheme!r}")
