"""Optimisation loop, learning-rate schedule, evaluation and probing."""

import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .autograd import no_grad
from .codec import TagSet
from .embedder import build_vocabularies
from .errors import ConfigError, TrainingError
from .metrics import score_ner, score_re, score_report
from .model import ModelConfig, TableSequenceModel, _checked, decode_output, model_loss

log = logging.getLogger(__name__)


@dataclass
class OptimConfig:
    batch_size: int = 24
    lr: float = 1e-3
    warmup_steps: int = 1000
    decay_rate: float = 0.05
    decay_steps: int = 1000
    clip: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    dev_average: str = "micro"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.dev_average not in ("micro", "macro"):
            raise ConfigError("dev_average must be micro or macro")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**_checked(cls, obj))


def learning_rate(step, cfg):
    """Linear warm-up times inverse-time decay; ``step`` counts updates from 1."""
    warm = min(step / cfg.warmup_steps, 1.0) if cfg.warmup_steps > 0 else 1.0
    return cfg.lr * warm / (1.0 + cfg.decay_rate * step / cfg.decay_steps)


def clip_grad_norm(params, max_norm):
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class Adam:
    def __init__(self, params, cfg):
        self.params = list(params)
        self.cfg = cfg
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        """One update with the scheduled learning rate; returns that rate."""
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        lr = learning_rate(t, cfg)
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        return lr

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def make_batches(sentences, batch_size, rng=None):
    """Index batches; with ``rng`` the order is shuffled and batches are length-bucketed."""
    idx = np.arange(len(sentences))
    if rng is None:
        return [idx[k : k + batch_size].tolist() for k in range(0, len(idx), batch_size)]
    idx = rng.permutation(len(sentences))
    pool = batch_size * 4
    batches = []
    for k in range(0, len(idx), pool):
        chunk = sorted(idx[k : k + pool].tolist(), key=lambda i: len(sentences[i].tokens))
        batches += [chunk[j : j + batch_size] for j in range(0, len(chunk), batch_size)]
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _features(feats, ids):
    return None if feats is None else [feats[i] for i in ids]


def predict(model, sentences, ctx=None, attn=None, batch_size=32, schedule="wavefront"):
    """Decoded (entities, relations) per sentence."""
    model.eval()
    results = []
    with no_grad():
        for ids in make_batches(sentences, batch_size):
            batch = [sentences[i] for i in ids]
            out = model([s.tokens for s in batch], _features(ctx, ids), _features(attn, ids), schedule=schedule)
            results += decode_output(model, out, [len(s.tokens) for s in batch])
    return results


def evaluate(model, sentences, ctx=None, attn=None, schedule="wavefront"):
    """Score report for a labelled set (see ``metrics.score_report``)."""
    preds = predict(model, sentences, ctx, attn, schedule=schedule)
    return score_report(
        [p[0] for p in preds], [s.entities for s in sentences],
        [p[1] for p in preds], [s.relations for s in sentences],
    )


def probe(model, sentences, ctx=None, attn=None, schedule="wavefront"):
    """Final prediction heads applied to every layer's (S_l, T_l).

    Returns one list per sentence with L entries of (entities, relations).
    """
    model.eval()
    out_all = [[] for _ in sentences]
    with no_grad():
        for ids in make_batches(sentences, 32):
            batch = [sentences[i] for i in ids]
            out = model([s.tokens for s in batch], _features(ctx, ids), _features(attn, ids), schedule=schedule)
            lengths = [len(s.tokens) for s in batch]
            for layer in range(model.config.layers):
                for k, res in zip(ids, decode_output(model, out, lengths, layer)):
                    out_all[k].append(res)
    return out_all


def dev_score(report, average="micro"):
    return (report["ner"][average]["f1"] + report["re"][average]["f1"]) / 2.0


@dataclass
class TrainResult:
    model: TableSequenceModel
    best_params: dict
    best_epoch: int
    best_dev: float
    history: list
    steps: int


def build_model(config, train_set, seed=0, word_emb=None, words=None, chars=None, tagset=None):
    if words is None or chars is None:
        words, chars = build_vocabularies(train_set)
    if tagset is None:
        tagset = TagSet.from_sentences(train_set, directed=config.codec.directed)
    return TableSequenceModel(config, tagset, words, chars, word_emb=word_emb, seed=seed)


def snapshot(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def restore(model, params):
    for name, p in model.named_parameters():
        p.data[...] = params[name]


def train(config, optim, train_set, dev_set=None, seed=0, model=None, word_emb=None,
          train_feats=(None, None), dev_feats=(None, None), on_log=None,
          stop_at_perfect_train=False, eval_train_every=0):
    """Train from scratch (or continue ``model``) and keep the best dev checkpoint.

    ``on_log`` receives one dict per step and one per epoch (JSON-ready).
    With ``stop_at_perfect_train`` training ends once training-set NER and
    strict relation F1 both reach 1.0 (checked every ``eval_train_every`` epochs).
    """
    train_set = list(train_set)
    if not train_set:
        raise ConfigError("training set is empty")
    if model is None:
        model = build_model(config, train_set, seed=seed, word_emb=word_emb)
    params = model.parameters()
    opt = Adam(params, optim)
    drop_rng = np.random.default_rng(seed + 1)
    shuffle_rng = np.random.default_rng(seed + 2)
    emit = on_log or (lambda rec: None)
    history = []
    best = (-1.0, -1, snapshot(model))
    ctx_all, attn_all = train_feats

    for epoch in range(1, optim.epochs + 1):
        model.train()
        t0 = time.perf_counter()
        epoch_loss = 0.0
        for ids in make_batches(train_set, optim.batch_size, shuffle_rng):
            batch = [train_set[i] for i in ids]
            opt.zero_grad()
            out = model([s.tokens for s in batch], _features(ctx_all, ids), _features(attn_all, ids), rng=drop_rng)
            loss = model_loss(model, batch, out)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at step {opt.step_count + 1}, "
                    f"lr {learning_rate(opt.step_count + 1, optim):.3g}, batch ids {batch_ids(train_set, ids)}"
                )
            loss.backward()
            norm = clip_grad_norm(params, optim.clip)
            lr = opt.step()
            epoch_loss += value
            emit({"step": opt.step_count, "epoch": epoch, "lr": lr, "loss": value, "grad_norm": norm})

        record = {"epoch": epoch, "loss": epoch_loss, "seconds": time.perf_counter() - t0}
        if dev_set:
            report = evaluate(model, dev_set, *dev_feats)
            record["dev"] = report
            score = dev_score(report, optim.dev_average)
            if score > best[0]:
                best = (score, epoch, snapshot(model))
        check_train = stop_at_perfect_train and (epoch % max(eval_train_every, 1) == 0 or epoch == optim.epochs)
        if check_train:
            train_report = evaluate(model, train_set, *train_feats)
            record["train"] = train_report
        history.append(record)
        emit(record)
        if check_train and train_report["ner"]["micro"]["f1"] == 1.0 and train_report["re_plus"]["micro"]["f1"] == 1.0:
            break

    if dev_set:
        restore(model, best[2])
    else:
        best = (float("nan"), len(history), snapshot(model))
    model.eval()
    return TrainResult(model, best[2], best[1], best[0], history, opt.step_count)


def batch_ids(sentences, ids):
    return [sentences[i].id or str(i) for i in ids]


def strict_f1(model, sentences):
    preds = predict(model, sentences)
    ner = score_ner([p[0] for p in preds], [s.entities for s in sentences])
    rep = score_re([p[1] for p in preds], [s.relations for s in sentences], strict=True)
    return ner.f1, rep.f1
