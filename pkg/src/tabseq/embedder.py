"""Initial sequence representation from word, character and contextual vectors."""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, dropout, parameter, zeros
from .errors import AlignmentError, ConfigError, FormatError
from .nn import GRUCell, Linear, Module

UNK, PAD = 0, 1
SPECIALS = ("<unk>", "<pad>")


class Vocabulary:
    """Token <-> index map with UNK at 0 and PAD at 1."""

    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token):
        return self.stoi.get(token, UNK)

    def to_list(self):
        return list(self.itos[len(SPECIALS):])

    @classmethod
    def from_list(cls, tokens):
        return cls(tokens)


def build_vocabularies(sentences):
    """Word vocabulary (lowercased) and character vocabulary (case kept)."""
    words, chars = Vocabulary(), Vocabulary()
    for s in sentences:
        for tok in s.tokens:
            words.add(tok.lower())
            for ch in tok:
                chars.add(ch)
    return words, chars


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    trainable: bool = False


def random_embeddings(vocab, dim, rng):
    rows = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    rows[PAD] = 0.0
    return EmbeddingMatrix(rows, trainable=False)


def load_glove(path, vocab, rng=None, dim=None):
    """Read a GloVe text file and build a frozen matrix for ``vocab``.

    Tokens missing from the file get rows drawn from U(-0.1, 0.1).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    found = {}
    width = dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise FormatError("expected a token followed by vector values", lineno)
            token, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise FormatError(f"non-numeric value in vector for {token!r}", lineno) from None
            if width is None:
                width = len(vec)
            elif len(vec) != width:
                raise FormatError(f"vector width {len(vec)} differs from {width}", lineno)
            if token in vocab.stoi:
                found[token] = vec
    if width is None:
        raise FormatError("empty embedding file")
    emb = random_embeddings(vocab, width, rng)
    for token, vec in found.items():
        emb.rows[vocab.stoi[token]] = vec
    return emb


class CharEncoder(Module):
    """Bidirectional GRU over characters; final states are projected to ``out_dim``."""

    def __init__(self, n_chars, rng, char_dim=30, hidden=30, out_dim=30):
        self.char_dim = char_dim
        self.hidden = hidden
        self.table = parameter(rng.uniform(-0.1, 0.1, size=(n_chars, char_dim)))
        self.fwd = GRUCell(char_dim, hidden, rng)
        self.bwd = GRUCell(char_dim, hidden, rng)
        self.proj = Linear(2 * hidden, out_dim, rng)

    def encode_words(self, char_ids):
        """``char_ids``: list of index lists, one per word.  Returns [W, out_dim]."""
        n = len(char_ids)
        width = max(len(c) for c in char_ids)
        ids = np.full((n, width), PAD, dtype=np.intp)
        mask = np.zeros((n, width))
        for k, c in enumerate(char_ids):
            ids[k, : len(c)] = c
            mask[k, : len(c)] = 1.0
        emb = self.table[ids]
        h_f = zeros((n, self.hidden))
        h_b = zeros((n, self.hidden))
        for t in range(width):
            m = Tensor(mask[:, t : t + 1])
            h_f = m * self.fwd(emb[:, t], h_f) + (1.0 - m) * h_f
        for t in reversed(range(width)):
            m = Tensor(mask[:, t : t + 1])
            h_b = m * self.bwd(emb[:, t], h_b) + (1.0 - m) * h_b
        return self.proj(concat([h_f, h_b], axis=-1))


class Embedder(Module):
    def __init__(self, words, chars, word_emb, rng, hidden=200, char_dim=30, char_out=30, ctx_dim=0):
        self.words = words
        self.chars = chars
        if word_emb.rows.shape[0] != len(words):
            raise ConfigError(f"embedding rows {word_emb.rows.shape[0]} != vocabulary size {len(words)}")
        self.word_table = Tensor(word_emb.rows, requires_grad=word_emb.trainable)
        self.word_dim = word_emb.rows.shape[1]
        self.char_encoder = CharEncoder(len(chars), rng, char_dim=char_dim, hidden=char_dim, out_dim=char_out)
        self.char_out = char_out
        self.ctx_dim = ctx_dim
        self.proj = Linear(char_out + self.word_dim + ctx_dim, hidden, rng)

    def char_encode(self, word):
        return self.char_encoder.encode_words([[self.chars.index(c) for c in word]])[0]

    def __call__(self, batch_tokens, ctx=None, rng=None, keep=1.0):
        """Embed a padded batch.  Returns S0 with shape [B, N_max, H]."""
        b = len(batch_tokens)
        n_max = max(len(t) for t in batch_tokens)
        if ctx is not None and self.ctx_dim == 0:
            raise ConfigError("contextual embeddings given but the model has ctx_dim=0")
        if ctx is None and self.ctx_dim:
            raise ConfigError(f"model expects contextual embeddings of width {self.ctx_dim}")

        # one char-encoder pass over the distinct words of the batch
        vocab_words = sorted({tok for toks in batch_tokens for tok in toks})
        pos = {w: k for k, w in enumerate(vocab_words)}
        char_vecs = self.char_encoder.encode_words([[self.chars.index(c) for c in w] for w in vocab_words])
        char_vecs = concat([char_vecs, zeros((1, self.char_out))], axis=0)
        pad_slot = len(vocab_words)

        word_ids = np.full((b, n_max), PAD, dtype=np.intp)
        char_rows = np.full((b, n_max), pad_slot, dtype=np.intp)
        for k, toks in enumerate(batch_tokens):
            word_ids[k, : len(toks)] = [self.words.index(t.lower()) for t in toks]
            char_rows[k, : len(toks)] = [pos[t] for t in toks]
        parts = [char_vecs[char_rows], self.word_table[word_ids]]

        if self.ctx_dim:
            buf = np.zeros((b, n_max, self.ctx_dim))
            for k, (toks, c) in enumerate(zip(batch_tokens, ctx)):
                c = np.asarray(c.data if isinstance(c, Tensor) else c)
                if c.shape[0] != len(toks):
                    raise AlignmentError(f"sentence has N={len(toks)} tokens but feature rows={c.shape[0]}")
                if c.shape[1] != self.ctx_dim:
                    raise ConfigError(f"feature width {c.shape[1]} != configured ctx_dim {self.ctx_dim}")
                buf[k, : len(toks)] = c
            parts.append(Tensor(buf))

        s0 = self.proj(concat(parts, axis=-1))
        return dropout(s0, keep, self.training, rng)

    def embed_sentence(self, tokens, ctx=None, rng=None, keep=1.0):
        return self([tokens], None if ctx is None else [ctx], rng=rng, keep=keep)[0]

