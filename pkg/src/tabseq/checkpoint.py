"""Checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"TABSEQCK"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header
    ...       parameter blocks, float64 '<f8', concatenated in manifest order

The header holds ``model_config``, ``optim_config``, ``tagset``,
``vocab`` (words, chars; specials excluded), ``seed`` and ``manifest``: a
list of ``{"name", "shape", "offset"}`` entries with byte offsets relative to
the start of the block area.  The frozen word-embedding matrix is stored as
the block named ``embedder.word_table``.
"""

import json
import struct

import numpy as np

from .codec import TagSet
from .embedder import EmbeddingMatrix, Vocabulary
from .errors import CorruptionError, VersionError
from .model import ModelConfig, TableSequenceModel
from .training import OptimConfig

MAGIC = b"TABSEQCK"
VERSION = 1
WORD_TABLE = "embedder.word_table"


def _blocks(model):
    yield WORD_TABLE, model.embedder.word_table.data
    for name, p in model.named_parameters():
        if name != WORD_TABLE:
            yield name, p.data


def save_checkpoint(path, model, optim=None, seed=0, extra=None):
    manifest, chunks, offset = [], [], 0
    for name, arr in _blocks(model):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "model_config": model.config.to_json(),
        "optim_config": (optim or OptimConfig()).to_json(),
        "tagset": model.tagset.to_json(),
        "vocab": {"words": model.embedder.words.to_list(), "chars": model.embedder.chars.to_list()},
        "seed": seed,
        "manifest": manifest,
        "extra": extra or {},
    }
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(head)))
        fh.write(head)
        for c in chunks:
            fh.write(c)


def read_header(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CorruptionError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise VersionError(f"{path}: checkpoint format version {version}, this build reads {VERSION}")
    header = json.loads(raw[20 : 20 + hlen].decode("utf-8"))
    return header, raw[20 + hlen :]


def load_checkpoint(path):
    """Returns (model, optim_config, header)."""
    header, body = read_header(path)
    config = ModelConfig.from_json(header["model_config"])
    optim = OptimConfig.from_json(header["optim_config"])
    tagset = TagSet.from_json(header["tagset"])
    words = Vocabulary.from_list(header["vocab"]["words"])
    chars = Vocabulary.from_list(header["vocab"]["chars"])
    arrays = {}
    for entry in header["manifest"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start, stop = entry["offset"], entry["offset"] + 8 * n
        if stop > len(body):
            raise CorruptionError(f"{path}: block {entry['name']} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(body[start:stop], dtype="<f8").reshape(entry["shape"]).copy()
    if WORD_TABLE not in arrays:
        raise CorruptionError(f"{path}: missing {WORD_TABLE}")
    model = TableSequenceModel(config, tagset, words, chars, word_emb=EmbeddingMatrix(arrays[WORD_TABLE]))
    expected = dict(model.named_parameters())
    stored = set(arrays) - {WORD_TABLE}
    if stored != set(expected):
        missing, unexpected = sorted(set(expected) - stored), sorted(stored - set(expected))
        raise VersionError(f"{path}: parameters do not match config (missing {missing[:5]}, unexpected {unexpected[:5]})")
    for name, p in expected.items():
        if p.shape != arrays[name].shape:
            raise VersionError(f"{path}: {name} has shape {arrays[name].shape}, config implies {p.shape}")
        p.data[...] = arrays[name]
    model.eval()
    return model, optim, header
