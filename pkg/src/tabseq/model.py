"""Model configuration and the stacked table-sequence encoder."""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autograd import Tensor, cross_entropy, softmax
from .codec import CodecConfig, decode_entities, decode_relations, encode
from .embedder import Embedder, random_embeddings
from .errors import AlignmentError, ConfigError, InputError
from .nn import Linear, Module
from .sequence_encoder import SequenceEncoderLayer
from .table_encoder import DIRECTION_SETS, SCHEDULES, TableEncoderLayer

NER_HEAD_SOURCES = ("sequence", "diagonal")


@dataclass
class ModelConfig:
    layers: int = 3
    hidden: int = 200
    heads: int = 8
    dropout: float = 0.5
    token_emb_dim: int = 100
    char_emb_dim: int = 30
    directions: str = "bi-ac"
    shared_layers: bool = False
    interaction: bool = True
    ner_head_source: str = "sequence"
    use_ctx_embeddings: bool = False
    ctx_dim: int = 0
    use_attn_features: bool = False
    attn_dim: int = 0
    use_layer_pred: bool = True
    use_row_pred: bool = True
    use_col_pred: bool = True
    ff_mult: int = 2
    schedule: str = "wavefront"
    entity_loss: bool = True
    relation_loss: bool = True
    codec: CodecConfig = field(default_factory=CodecConfig)

    def __post_init__(self):
        if isinstance(self.codec, dict):
            self.codec = CodecConfig(**self.codec)
        self.validate()

    def validate(self):
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.directions not in DIRECTION_SETS:
            raise ConfigError(f"directions must be one of {sorted(DIRECTION_SETS)}")
        if self.hidden % len(DIRECTION_SETS[self.directions]):
            raise ConfigError(f"hidden {self.hidden} not divisible by direction count of {self.directions}")
        if self.hidden % self.heads:
            raise ConfigError(f"heads {self.heads} do not divide hidden {self.hidden}")
        if self.ner_head_source not in NER_HEAD_SOURCES:
            raise ConfigError(f"ner_head_source must be one of {NER_HEAD_SOURCES}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.use_ctx_embeddings != (self.ctx_dim > 0):
            raise ConfigError("use_ctx_embeddings requires ctx_dim > 0 (and vice versa)")
        if self.use_attn_features != (self.attn_dim > 0):
            raise ConfigError("use_attn_features requires attn_dim > 0 (and vice versa)")

    def to_json(self):
        out = asdict(self)
        out["codec"] = self.codec.to_json()
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(**_checked(cls, obj))


def _checked(cls, obj):
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(obj)


@dataclass
class ForwardOutput:
    ner_logits: Tensor
    re_logits: Tensor
    mask: np.ndarray
    states: list  # [(S_l, T_l)] for l = 1..L
    attention: list  # [B, A, N, N] weights per layer

    @property
    def p_ner(self):
        return softmax(self.ner_logits, axis=-1)

    @property
    def p_re(self):
        return softmax(self.re_logits, axis=-1)


class TableSequenceModel(Module):
    def __init__(self, config, tagset, words, chars, word_emb=None, seed=0):
        self.config = config
        self.tagset = tagset
        rng = np.random.default_rng(seed)
        if word_emb is None:
            word_emb = random_embeddings(words, config.token_emb_dim, rng)
        if word_emb.rows.shape[1] != config.token_emb_dim:
            raise ConfigError(f"word vectors have width {word_emb.rows.shape[1]}, config says {config.token_emb_dim}")
        h = config.hidden
        self.embedder = Embedder(words, chars, word_emb, rng, hidden=h, char_dim=config.char_emb_dim,
                                 char_out=config.char_emb_dim, ctx_dim=config.ctx_dim)
        n_blocks = 1 if config.shared_layers else config.layers
        self.table_layers = [TableEncoderLayer(h, rng, config.directions, config.attn_dim) for _ in range(n_blocks)]
        self.seq_layers = [SequenceEncoderLayer(h, config.heads, rng, config.interaction, config.ff_mult)
                           for _ in range(n_blocks)]
        self.ner_head = Linear(h, len(tagset.ner_tags), rng)
        self.re_head = Linear(h, len(tagset.re_tags), rng)

    def _block(self, l):
        k = 0 if self.config.shared_layers else l
        return self.table_layers[k], self.seq_layers[k]

    def forward(self, batch_tokens, ctx=None, attn_feats=None, rng=None, schedule=None):
        cfg = self.config
        if not batch_tokens or any(len(t) == 0 for t in batch_tokens):
            raise InputError("every sentence needs at least one token")
        schedule = schedule or cfg.schedule
        keep = 1.0 - cfg.dropout
        b, n = len(batch_tokens), max(len(t) for t in batch_tokens)
        mask = np.zeros((b, n))
        for k, toks in enumerate(batch_tokens):
            mask[k, : len(toks)] = 1.0
        cell_mask = mask[:, :, None] * mask[:, None, :]

        feat = None
        if cfg.attn_dim:
            if attn_feats is None:
                raise ConfigError(f"model expects attention features of width {cfg.attn_dim}")
            buf = np.zeros((b, n, n, cfg.attn_dim))
            for k, (toks, f) in enumerate(zip(batch_tokens, attn_feats)):
                f = np.asarray(f)
                if f.shape[:2] != (len(toks), len(toks)):
                    raise AlignmentError(f"attention features {f.shape[:2]} do not match N={len(toks)}")
                buf[k, : len(toks), : len(toks)] = f
            feat = Tensor(buf)

        s0 = self.embedder(batch_tokens, ctx if cfg.ctx_dim else None, rng=rng, keep=keep)
        s, t_dirs = s0, None
        states, attention = [], []
        for l in range(cfg.layers):
            table_layer, seq_layer = self._block(l)
            src = s if cfg.interaction else s0
            t, t_dirs = table_layer(src, t_dirs, feat, cell_mask, schedule,
                                    cfg.use_layer_pred, cfg.use_row_pred, cfg.use_col_pred)
            s, weights = seq_layer(s, t, mask, keep, rng)
            states.append((s, t))
            attention.append(weights)
        s_last, t_last = states[-1]
        return ForwardOutput(self.ner_logits(s_last, t_last), self.re_head(t_last), mask, states, attention)

    __call__ = forward

    def ner_logits(self, s, t):
        if self.config.ner_head_source == "diagonal":
            n = t.shape[1]
            idx = np.arange(n)
            return self.ner_head(t[:, idx, idx])
        return self.ner_head(s)

    def gold_arrays(self, sentences, strict=False):
        """Padded gold index arrays (ner [B, N], re [B, N, N])."""
        b, n = len(sentences), max(len(s.tokens) for s in sentences)
        ner = np.zeros((b, n), dtype=np.intp)
        re = np.zeros((b, n, n), dtype=np.intp)
        for k, s in enumerate(sentences):
            tags = encode(s, self.tagset, self.config.codec, strict=strict)
            m = len(s.tokens)
            ner[k, :m] = tags.ner_indices(self.tagset)
            re[k, :m, :m] = tags.re_indices(self.tagset)
        return ner, re


def joint_loss(ner_logits, re_logits, gold_ner, gold_re, mask, entity_loss=True, relation_loss=True):
    """Summed token cross-entropy plus summed off-diagonal cell cross-entropy.

    Padded positions have weight zero; diagonal cells never contribute.
    """
    mask = np.asarray(mask, dtype=float)
    terms = []
    if entity_loss:
        terms.append(cross_entropy(ner_logits, gold_ner, weights=mask))
    if relation_loss:
        n = mask.shape[1]
        cell = mask[:, :, None] * mask[:, None, :] * (1.0 - np.eye(n))[None]
        terms.append(cross_entropy(re_logits, gold_re, weights=cell))
    if not terms:
        raise ConfigError("at least one of the entity and relation losses must be enabled")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def model_loss(model, sentences, out):
    gold_ner, gold_re = model.gold_arrays(sentences)
    cfg = model.config
    return joint_loss(out.ner_logits, out.re_logits, gold_ner, gold_re, out.mask, cfg.entity_loss, cfg.relation_loss)


def decode_output(model, out, lengths, layer=None):
    """Entities and relations per sentence from a forward pass (final layer or a probed one)."""
    if layer is None:
        p_ner, p_re = out.p_ner.data, out.p_re.data
    else:
        s, t = out.states[layer]
        p_ner = softmax(model.ner_logits(s, t), axis=-1).data
        p_re = softmax(model.re_head(t), axis=-1).data
    results = []
    for k, n in enumerate(lengths):
        ents = decode_entities(p_ner[k, :n], model.tagset)
        rels = decode_relations(p_re[k, :n, :n], ents, model.tagset, model.config.codec)
        results.append((ents, rels))
    return results


def count_parameters(model):
    return sum(p.size for p in model.parameters())
