"""Transformer-style sequence encoder whose attention scores come from the table."""

import json

import numpy as np

from .autograd import Tensor, dropout, parameter, softmax
from .errors import ConfigError
from .nn import LayerNorm, Linear, Module, glorot

NEG_INF = -1e30


def _key_bias(mask):
    """Additive score bias [B, 1, 1, N] that removes padded keys."""
    if mask is None:
        return None
    return Tensor(np.where(mask, 0.0, NEG_INF)[:, None, None, :])


class TableGuidedAttention(Module):
    """score_a(i, j) = U_a . T[i, j]; values are per-head projections of S."""

    def __init__(self, hidden, heads, rng):
        if hidden % heads:
            raise ConfigError(f"{heads} heads do not divide hidden size {hidden}")
        self.hidden, self.heads = hidden, heads
        self.u = parameter(glorot(rng, hidden, heads))
        self.value = Linear(hidden, hidden, rng, bias=False)
        self.mix = Linear(hidden, hidden, rng)

    def weights(self, s, table, mask=None):
        scores = (table @ self.u).transpose(0, 3, 1, 2)  # [B, A, N, N]
        bias = _key_bias(mask)
        if bias is not None:
            scores = scores + bias
        return softmax(scores, axis=-1)

    def __call__(self, s, table, mask=None):
        b, n, _ = s.shape
        attn = self.weights(s, table, mask)
        v = self.value(s).reshape(b, n, self.heads, -1).transpose(0, 2, 1, 3)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, n, self.hidden)
        return self.mix(out), attn


class DotProductAttention(Module):
    """Conventional multi-head scaled dot-product attention (no table input)."""

    def __init__(self, hidden, heads, rng):
        if hidden % heads:
            raise ConfigError(f"{heads} heads do not divide hidden size {hidden}")
        self.hidden, self.heads = hidden, heads
        self.query = Linear(hidden, hidden, rng)
        self.key = Linear(hidden, hidden, rng)
        self.value = Linear(hidden, hidden, rng, bias=False)
        self.mix = Linear(hidden, hidden, rng)

    def _split(self, x, b, n):
        return x.reshape(b, n, self.heads, -1).transpose(0, 2, 1, 3)

    def weights(self, s, table=None, mask=None):
        b, n, _ = s.shape
        q = self._split(self.query(s), b, n)
        k = self._split(self.key(s), b, n)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.hidden // self.heads))
        bias = _key_bias(mask)
        if bias is not None:
            scores = scores + bias
        return softmax(scores, axis=-1)

    def __call__(self, s, table=None, mask=None):
        b, n, _ = s.shape
        attn = self.weights(s, table, mask)
        v = self._split(self.value(s), b, n)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, n, self.hidden)
        return self.mix(out), attn


class FeedForward(Module):
    def __init__(self, hidden, inner, rng):
        self.inp = Linear(hidden, inner, rng)
        self.out = Linear(inner, hidden, rng)

    def __call__(self, x):
        return self.out(self.inp(x).relu())


class SequenceEncoderLayer(Module):
    """S~ = LN(S + Attn(S)); S' = LN(S~ + FFNN(S~))."""

    def __init__(self, hidden, heads, rng, interaction=True, ff_mult=2):
        attn_cls = TableGuidedAttention if interaction else DotProductAttention
        self.attention = attn_cls(hidden, heads, rng)
        self.norm_attn = LayerNorm(hidden)
        self.ffnn = FeedForward(hidden, ff_mult * hidden, rng)
        self.norm_ff = LayerNorm(hidden)

    def __call__(self, s, table, mask=None, keep=1.0, rng=None):
        a, weights = self.attention(s, table, mask)
        s_mid = self.norm_attn(s + dropout(a, keep, self.training, rng))
        s_out = self.norm_ff(s_mid + dropout(self.ffnn(s_mid), keep, self.training, rng))
        return s_out, weights


def table_guided_attention(attention, s_prev, table, mask=None):
    out, _ = attention(s_prev, table, mask)
    return out


def attention_json(weights_per_layer, n):
    """Serialise per-layer attention ([A, N, N] arrays) for one sentence."""
    layers = []
    for w in weights_per_layer:
        w = np.asarray(w)[:, :n, :n]
        layers.append({"heads": [head.tolist() for head in w]})
    return {"layers": layers}


def dumps_attention(weights_per_layer, n):
    return json.dumps(attention_json(weights_per_layer, n))
